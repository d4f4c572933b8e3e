"""Image knowledge base: inner-product IVF-PQ index and exact oracle."""

from app.vindex.models import IvfPqIndex
from app.vindex.schemas import SearchResult
from app.vindex.service import add_keys, brute_force_search, recall_at_k, search, train_index
from app.vindex.storage import index_checksum, load_index, save_index

__all__ = [
    "IvfPqIndex",
    "SearchResult",
    "add_keys",
    "brute_force_search",
    "index_checksum",
    "load_index",
    "recall_at_k",
    "save_index",
    "search",
    "train_index",
]
