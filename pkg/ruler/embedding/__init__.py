"""
Embedding core: storage, L2 normalisation, cosine similarity and RULR files.
"""

from ruler.embedding.io import from_bytes, read_rulr, to_bytes, write_rulr
from ruler.embedding.matrix import (
    EmbeddingMatrix,
    ModelRole,
    ModelTriple,
    cosine_cross,
    cosine_within,
    cross_similarities,
    l2_normalize,
)

__all__ = [
    "EmbeddingMatrix",
    "ModelRole",
    "ModelTriple",
    "cosine_cross",
    "cosine_within",
    "cross_similarities",
    "l2_normalize",
    "from_bytes",
    "to_bytes",
    "read_rulr",
    "write_rulr",
]
