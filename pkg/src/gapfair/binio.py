"""Little-endian binary containers: 4-byte magic, u64 header fields, f32 payload."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

_U64 = struct.Struct("<Q")
F32 = np.dtype("<f4")


def write_blob(path: str | Path, magic: bytes, header: tuple[int, ...], *arrays: np.ndarray) -> None:
    assert len(magic) == 4
    with open(path, "wb") as fh:
        fh.write(magic)
        for value in header:
            fh.write(_U64.pack(int(value)))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=F32).tobytes())


def read_blob(path: str | Path, magic: bytes, n_header: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Return the header integers and the raw float payload (flat, float32)."""
    raw = Path(path).read_bytes()
    if raw[:4] != magic:
        raise DataError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    off = 4 + 8 * n_header
    if len(raw) < off:
        raise DataError(f"{path}: truncated header")
    header = tuple(_U64.unpack_from(raw, 4 + 8 * i)[0] for i in range(n_header))
    body = raw[off:]
    if len(body) % 4:
        raise DataError(f"{path}: payload length {len(body)} is not a multiple of 4")
    return header, np.frombuffer(body, dtype=F32)
