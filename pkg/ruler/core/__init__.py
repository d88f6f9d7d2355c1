"""
Core module initialization.
"""

from ruler.core.config import (
    BaselineKind,
    DatasetConfig,
    RulerConfig,
    UnlearnConfig,
    UnlearnMethod,
)
from ruler.core.errors import ConfigError, RulerError
from ruler.core.log import configure_logging
from ruler.core.rng import stable_hash, stream

__all__ = [
    "BaselineKind",
    "DatasetConfig",
    "RulerConfig",
    "UnlearnConfig",
    "UnlearnMethod",
    "ConfigError",
    "RulerError",
    "configure_logging",
    "stable_hash",
    "stream",
]
