"""
RULR binary embedding files.

Layout (all little-endian):
    magic    4 bytes  b"RULR"
    version  u32      1
    n        u64      number of records
    dim      u64      embedding dimension
    data     n*dim    float32, row-major
    flag     u8       1 if rows are L2-normalised
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from ruler.core.errors import EmbeddingFormatError
from ruler.embedding.matrix import EmbeddingMatrix, ModelRole

MAGIC = b"RULR"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def to_bytes(m: EmbeddingMatrix) -> bytes:
    """Serialise a matrix to RULR bytes."""
    header = _HEADER.pack(MAGIC, VERSION, m.n_records, m.dim)
    body = m.data.astype("<f4", copy=False).tobytes(order="C")
    return header + body + struct.pack("<B", 1 if m.normalized else 0)


def from_bytes(buf: bytes, role: ModelRole = ModelRole.EXTERNAL) -> EmbeddingMatrix:
    """
    Parse RULR bytes.

    Args:
        buf: Complete file contents
        role: Role tag for the returned matrix

    Returns:
        The decoded EmbeddingMatrix

    Raises:
        EmbeddingFormatError: On bad magic, version, size or content
    """
    if len(buf) < _HEADER.size + 1:
        raise EmbeddingFormatError(f"RULR buffer too short ({len(buf)} bytes)")
    magic, version, n, dim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"Unsupported RULR version {version}")
    expected = _HEADER.size + n * dim * 4 + 1
    if len(buf) != expected:
        raise EmbeddingFormatError(
            f"RULR size mismatch: header implies {expected} bytes, got {len(buf)}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=_HEADER.size)
    flag = buf[-1]
    if flag not in (0, 1):
        raise EmbeddingFormatError(f"Bad normalized flag byte {flag}")
    try:
        return EmbeddingMatrix(
            data=data.reshape(n, dim),
            normalized=bool(flag),
            model_role=role,
        )
    except ValueError as e:
        raise EmbeddingFormatError(f"Invalid RULR content: {e}")


def write_rulr(path: Union[str, Path], m: EmbeddingMatrix) -> Path:
    """Write a matrix to a RULR file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(m))
    return path


def read_rulr(path: Union[str, Path], role: ModelRole = ModelRole.EXTERNAL) -> EmbeddingMatrix:
    """Read a RULR file."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise EmbeddingFormatError(f"Cannot read {path}: {e}")
    return from_bytes(buf, role=role)
