"""Fusion language model constants."""

# Layer norm epsilon of every text-side layer norm and the image-slot default
LN_EPS = 1e-5
MLP_RATIO = 4
DEFAULT_INIT_STD = 0.02

# Checkpoint file
CHECKPOINT_MAGIC = b"VALMCKPT"
CHECKPOINT_VERSION = 1

# Error messages
SHAPE_MISMATCH_ERROR = "Shape mismatch: {detail}"
NON_FINITE_INPUT_ERROR = "Non-finite values in {what}"
CORRUPT_CHECKPOINT_ERROR = "Checkpoint {path} is corrupt: {reason}"
CONFIG_MISMATCH_ERROR = "Checkpoint config does not match: {detail}"
CHECKPOINT_IO_ERROR = "Cannot access checkpoint {path}: {reason}"
