"""Evaluation constants."""

SLOT_PATTERN = r"\[([A-Z]+)\]"
OPTIONAL_SLOTS = frozenset({"DESCRIPTOR"})

COLOR_LABELS = ("red", "white", "orange", "green", "blue", "yellow", "purple", "black", "pink", "grey", "brown")
SHAPE_LABELS = (
    "cross",
    "heart",
    "octagon",
    "oval",
    "polygon",
    "rectangle",
    "rhombus",
    "round",
    "semicircle",
    "square",
    "star",
    "triangle",
)
SIZE_LABELS = ("Yes", "No")
SENTIMENT_LABELS = ("Positive", "Negative")
DBPEDIA_LABELS = (
    "company",
    "school",
    "artist",
    "athlete",
    "politician",
    "transportation",
    "building",
    "nature",
    "village",
    "animal",
    "plant",
    "album",
    "film",
    "book",
)
AGNEWS_LABELS = ("world", "sports", "business", "technology")

# Error messages
EMPTY_LABEL_SET_ERROR = "Prompt for task {task} has no candidate labels"
GOLD_LABEL_MISSING_ERROR = "Gold label {gold!r} of item {item} is not among {labels}"
EMPTY_SOLUTION_ERROR = "Solution {index} is empty"
EMPTY_CORPUS_ERROR = "Evaluation corpus has no scorable tokens"
EMPTY_TASK_ERROR = "Task {task} needs {detail}"
EMPTY_LABEL_ERROR = "Label {label!r} tokenizes to nothing"
IMAGES_REQUIRED_ERROR = "Counterfactual probe needs retrieved image slots"
MISSING_SLOT_ERROR = "No value for slot [{name}]"
