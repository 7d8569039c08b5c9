"""Deterministic hashing and RNG derivation shared across the pipeline.

Python's builtin ``hash`` is salted per process, so every place that needs
run-to-run stable pseudo-randomness (split assignment, fold partitions,
per-cell training seeds) goes through SHA-256 instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*parts: object) -> int:
    """64-bit hash of the string forms of ``parts``, stable across runs."""
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derived_rng(*parts: object) -> np.random.Generator:
    """Generator seeded from a stable hash of ``parts``."""
    return np.random.default_rng(stable_hash(*parts))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
