"""Trainer constants."""

LOG_EVERY = 50
LOSS_CSV_HEADER = ("step", "lr", "nll")
CHECKPOINT_NAME = "step{step:06d}.valmckpt"

# Error messages
EMPTY_CORPUS_ERROR = "Corpus has no block of {seq_len} tokens"
NON_FINITE_LOSS_ERROR = "Loss became non-finite at step {step}"
