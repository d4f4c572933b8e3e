"""Little-endian binary helpers shared by the on-disk formats."""

import struct
import zlib
from io import BytesIO

import numpy as np

DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


class Truncated(Exception):
    """Raised when a reader runs past the end of its buffer."""


class BinaryWriter:
    """Append-only little-endian writer over an in-memory buffer."""

    def __init__(self):
        self.buffer = BytesIO()

    def raw(self, data: bytes) -> None:
        self.buffer.write(data)

    def u16(self, value: int) -> None:
        self.buffer.write(struct.pack("<H", value))

    def u32(self, value: int) -> None:
        self.buffer.write(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self.buffer.write(struct.pack("<Q", value))

    def f64(self, value: float) -> None:
        self.buffer.write(struct.pack("<d", value))

    def text(self, value: str) -> None:
        """Length-prefixed UTF-8 string."""
        encoded = value.encode("utf-8")
        self.u32(len(encoded))
        self.raw(encoded)

    def array(self, values: np.ndarray, dtype: str) -> None:
        """Raw array bytes in the given little-endian dtype."""
        self.raw(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        return self.buffer.getvalue()


class BinaryReader:
    """Sequential reader that raises ``Truncated`` instead of returning short reads."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def raw(self, size: int) -> bytes:
        end = self.offset + size
        if size < 0 or end > len(self.data):
            raise Truncated(f"need {size} bytes at offset {self.offset}, have {len(self.data)}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.raw(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.raw(8))[0]

    def text(self) -> str:
        return self.raw(self.u32()).decode("utf-8")

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.raw(item * count), dtype=dtype).copy()

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.data)


def checksum(data: bytes) -> int:
    """CRC-32 of a payload."""
    return zlib.crc32(data) & 0xFFFFFFFF
