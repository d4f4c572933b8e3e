"""Encoder domain constants."""

# Context chunks
DEFAULT_CHUNK_CAP = 75
STOP_CHARACTERS = (".", "!", "?", "\n")

# Synthetic encoder geometry: image(o, a) = OBJECT_WEIGHT * u_o + ATTRIBUTE_WEIGHT * w_a + noise
OBJECT_WEIGHT = 0.2**0.5
ATTRIBUTE_WEIGHT = 0.8**0.5
IMAGE_NOISE = 0.1

# Embedding file
EMBEDDING_MAGIC = b"VALMEMB\x00"
EMBEDDING_VERSION = 1

# Error messages
CHUNK_TOO_LONG_ERROR = "Chunk of {length} tokens exceeds the encoder limit of {limit}"
UNKNOWN_EMBEDDING_ERROR = "No precomputed embedding for {what}"
CORRUPT_EMBEDDINGS_ERROR = "Embedding file {path} is corrupt: {reason}"
INVALID_ENCODER_SETUP_ERROR = "Invalid encoder setup: {detail}"
