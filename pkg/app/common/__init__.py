"""Common/shared utilities module."""

from app.common.corpus import CorpusStore
from app.common.files import atomic_write, write_bytes_atomic, write_text_atomic
from app.common.pagination import PaginationParams, paginate
from app.common.sorting import rank_by_score, top_k_by_score

__all__ = [
    "CorpusStore",
    "PaginationParams",
    "atomic_write",
    "paginate",
    "rank_by_score",
    "top_k_by_score",
    "write_bytes_atomic",
    "write_text_atomic",
]
