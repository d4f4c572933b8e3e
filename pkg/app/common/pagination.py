"""Windowing utilities for token sequences."""

import numpy as np
from pydantic import BaseModel, Field


class PaginationParams(BaseModel):
    """Split a sequence into consecutive, non-overlapping pages."""

    page_size: int = Field(ge=1, description="Tokens per page")
    drop_last: bool = Field(default=False, description="Drop a trailing partial page")

    def total_pages(self, total: int) -> int:
        """Number of pages produced for a sequence of ``total`` tokens."""
        if self.drop_last:
            return total // self.page_size
        return (total + self.page_size - 1) // self.page_size

    def bounds(self, page: int, total: int) -> tuple[int, int]:
        """Half-open ``[start, end)`` range of a page."""
        start = page * self.page_size
        return start, min(start + self.page_size, total)


def paginate(tokens: np.ndarray, pagination: PaginationParams) -> list[tuple[int, np.ndarray]]:
    """
    Cut a token sequence into pages.

    Args:
        tokens: 1-D token array
        pagination: Page size and partial-page policy

    Returns:
        List of ``(start, page_tokens)`` in sequence order
    """
    total = len(tokens)
    pages = []
    for page in range(pagination.total_pages(total)):
        start, end = pagination.bounds(page, total)
        pages.append((start, tokens[start:end]))
    return pages
