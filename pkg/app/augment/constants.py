"""Augmentation domain constants."""

# Retrieval cache file
CACHE_MAGIC = b"VALMRC\x00\x00"
CACHE_VERSION = 1

# Grounded corpus
MIN_OBJECTS = 4
MIN_ATTRIBUTES = 2
OBJECT_NAME = "item{index:03d}"
ATTRIBUTE_NAMES = (
    "red",
    "white",
    "orange",
    "green",
    "blue",
    "yellow",
    "purple",
    "black",
    "pink",
    "grey",
    "brown",
)
SENTENCES_PER_PASSAGE = 16
TRAIN_TEMPLATES = (
    "the color of {obj} is {attr} .",
    "{obj} is {attr} .",
    "the {obj} looks {attr} .",
    "this {obj} has a {attr} color .",
    "everyone knows that {obj} is {attr} .",
)
PROMPT_TEMPLATES = (
    "the color of [ITEM] is",
    "[ITEM] is",
    "everyone knows that [ITEM] is",
)
CORPUS_TASK = "grounded_color"

# Error messages
INDEX_UNAVAILABLE_ERROR = "Retrieval mode needs a loaded index: {detail}"
ENCODER_MISMATCH_ERROR = "Encoder dimension {got} does not match {expected} ({what})"
BINDING_MISMATCH_ERROR = "Retrieval cache {path} is stale: {fields} differ"
CORRUPT_CACHE_ERROR = "Retrieval cache {path} is corrupt: {reason}"
SPEC_INFEASIBLE_ERROR = "Grounded corpus spec is infeasible: {detail}"
POSITION_OUT_OF_RANGE_ERROR = "Position {position} outside [0, {length})"
TOO_MANY_REPLACEMENTS_ERROR = "{got} replacement keys for {slots} slots"
