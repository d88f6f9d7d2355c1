"""
RULM model files and the trained-model cache.

RULM layout (little-endian):
    magic    4 bytes  b"RULM"
    version  u32      1
    d        u64      input features
    hidden   u64      hidden width
    classes  u64      output classes
    weights  float64  W1, b1, W2, b2, W3, b3 row-major
"""

import logging
import os
import struct
import tempfile
import threading
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from ruler.core.errors import ModelFormatError
from ruler.core.rng import stable_hash

logger = logging.getLogger("ruler.training.cache")

MAGIC = b"RULM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")


def _shapes(d: int, hidden: int, classes: int) -> List[tuple[int, ...]]:
    return [(d, hidden), (hidden,), (hidden, hidden), (hidden,), (hidden, classes), (classes,)]


def params_to_bytes(params: List[np.ndarray]) -> bytes:
    """Serialise MLP weights to RULM bytes."""
    d, hidden = params[0].shape
    classes = params[4].shape[1]
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in params)
    return _HEADER.pack(MAGIC, VERSION, d, hidden, classes) + body


def params_from_bytes(buf: bytes) -> List[np.ndarray]:
    """
    Parse RULM bytes.

    Raises:
        ModelFormatError: On bad magic, version or size
    """
    if len(buf) < _HEADER.size:
        raise ModelFormatError(f"RULM buffer too short ({len(buf)} bytes)")
    magic, version, d, hidden, classes = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"Unsupported RULM version {version}")
    shapes = _shapes(d, hidden, classes)
    count = sum(int(np.prod(s)) for s in shapes)
    if len(buf) != _HEADER.size + 8 * count:
        raise ModelFormatError(
            f"RULM size mismatch: expected {_HEADER.size + 8 * count} bytes, got {len(buf)}"
        )
    flat = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    params, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        params.append(flat[offset:offset + size].reshape(shape).astype(np.float64))
        offset += size
    return params


def cache_key(dataset_fp: str, train_fp: str, init_seed: int, config_hash: str) -> str:
    """Cache key; any component change invalidates the entry."""
    return stable_hash(dataset_fp, train_fp, init_seed, config_hash)[:32]


class ModelCache:
    """
    Trained-weight cache with one writer per key.

    Entries live in memory and, when a directory is configured, as RULM files.
    Concurrent requests for one key block until the first trainer finishes.
    """

    def __init__(self, directory: Optional[Union[str, Path]] = None):
        self.directory = Path(directory) if directory else None
        self._memory: Dict[str, List[np.ndarray]] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _lock_for(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def _path(self, key: str) -> Optional[Path]:
        return self.directory / f"{key}.rulm" if self.directory else None

    def get_or_train(self, key: str, train_fn: Callable[[], List[np.ndarray]]) -> List[np.ndarray]:
        """
        Return cached weights for key, training and storing them on a miss.

        Args:
            key: Cache key from cache_key()
            train_fn: Produces the weights when nothing is cached

        Returns:
            Weight arrays (callers must not mutate them)
        """
        with self._lock_for(key):
            if key in self._memory:
                self.hits += 1
                return self._memory[key]

            path = self._path(key)
            if path is not None and path.exists():
                try:
                    params = params_from_bytes(path.read_bytes())
                    self._memory[key] = params
                    self.hits += 1
                    logger.info(f"Model cache hit {key[:12]}")
                    return params
                except ModelFormatError as e:
                    logger.warning(f"Ignoring corrupt cache entry {path}: {e}")

            self.misses += 1
            params = train_fn()
            self._memory[key] = params
            if path is not None:
                self._write(path, params)
            return params

    def _write(self, path: Path, params: List[np.ndarray]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(params_to_bytes(params))
            os.replace(tmp, path)
        except OSError as e:
            logger.warning(f"Could not write cache entry {path}: {e}")
            if os.path.exists(tmp):
                os.unlink(tmp)
