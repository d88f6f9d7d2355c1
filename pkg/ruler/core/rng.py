"""
Keyed random streams.

Every stochastic choice in RULER draws from a generator keyed by
(purpose, key, seed). Streams with different purposes never share
state, so adding draws in one place cannot shift another.

The bit generator is numpy's PCG64 fed by a SeedSequence over
`seed_words(purpose, key, seed)`. Streams and their draws:

    purpose           key                 consumer                         draws
    split             dataset name        data.partition.stratified_split  permutation
    forget            "<dataset>/<ff>"    data.partition.sample_forget_set choice
    synthetic         dataset name        data.dataset.make_synthetic      permutation, choice,
                                                                           standard_normal, integers
    init              ""                  training.mlp.init_params         uniform
    bad-teacher-init  ""                  training.unlearning              uniform
    dropout           "train" or method   training.mlp / unlearning        random
    retain-baseline   ""                  metrics.lens1.retain_subsample   choice
    m4-cap            ""                  metrics.lens2.retain_pool        choice
    grad-check        ""                  training.mlp.grad_check          permutation

Byte-identical outputs hold for one numpy release: PCG64 and SeedSequence
bitstreams are fixed, Generator methods may change between releases.
"""

import hashlib
from typing import Any, Iterable

import numpy as np

PURPOSES = frozenset({
    "split",
    "forget",
    "init",
    "dropout",
    "retain-baseline",
    "m4-cap",
    "synthetic",
    "bad-teacher-init",
    "grad-check",
})


def seed_words(purpose: str, key: str, seed: int) -> list[int]:
    """SeedSequence entropy: two u32 seed words, then SHA-256(purpose NUL key)[:16]."""
    digest = hashlib.sha256(f"{purpose}\x00{key}".encode("utf-8")).digest()
    key_words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *key_words]


def stream(purpose: str, key: str = "", seed: int = 0) -> np.random.Generator:
    """
    Create a deterministic generator for one purpose.

    Args:
        purpose: Purpose tag (one of PURPOSES)
        key: Secondary key, typically a dataset name or method tag
        seed: Non-negative integer seed

    Returns:
        A numpy Generator backed by a PCG64 bit generator
    """
    if purpose not in PURPOSES:
        raise ValueError(f"Unknown random stream purpose: {purpose}")
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    entropy = np.random.SeedSequence(seed_words(purpose, key, seed))
    return np.random.Generator(np.random.PCG64(entropy))


def stable_hash(*parts: Any) -> str:
    """Hex SHA-256 over the string forms of parts, joined by '/'."""
    return hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).hexdigest()


def fingerprint_indices(indices: Iterable[int]) -> str:
    """Fingerprint an index set independent of its iteration order."""
    arr = np.sort(np.asarray(list(indices), dtype=np.int64))
    return hashlib.sha256(arr.astype("<i8").tobytes()).hexdigest()[:16]
