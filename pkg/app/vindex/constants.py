"""Vector index constants."""

# Product quantization: one byte per subquantizer
CODEBOOK_SIZE = 256

# Desk-scale defaults; the full-scale operating point is 131072 centroids,
# 32-byte codes and 32 probed lists.
DEFAULT_CENTROIDS = 256
DEFAULT_SUBQUANTIZERS = 8
DEFAULT_NPROBE = 32
DEFAULT_KMEANS_ITERS = 20

# Index file
INDEX_MAGIC = b"VALMIVF\x00"
INDEX_VERSION = 1
METRIC_INNER_PRODUCT = 0
FLAG_EXACT = 1

# Error messages
INSUFFICIENT_SAMPLES_ERROR = "Need at least {needed} training vectors, got {got}"
DIM_MISMATCH_ERROR = "Expected vectors of dimension {expected}, got {got}"
DUPLICATE_ID_ERROR = "Image id {image_id} is already stored"
NOT_TRAINED_ERROR = "Index is not trained"
CORRUPT_INDEX_ERROR = "Index file {path} is corrupt: {reason}"
IO_FAILURE_ERROR = "Cannot access {path}: {reason}"
INVALID_SEARCH_ERROR = "Invalid search: {detail}"
NON_FINITE_SAMPLE_ERROR = "Training sample contains non-finite values"
