"""Deterministic derivation of independent random streams.

Every random stream in the package is derived from a 64-bit master seed, a
purpose tag and a replica index through one documented rule:

    entropy = [master_seed, lower 64 bits of SHA-256(purpose), index]
    stream  = PCG64(SeedSequence(entropy))

Distinct purposes or indices give statistically independent streams, and the
derivation is stable across runs and processes, so any experiment is
reproducible from its master seed alone.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def purpose_key(purpose: str) -> int:
    """Map a purpose tag to a 64-bit integer (low 8 bytes of its SHA-256)."""
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(master_seed: int, purpose: str, index: int = 0):
    return np.random.SeedSequence(
        [int(master_seed) & _MASK64, purpose_key(purpose), int(index) & _MASK64]
    )


def derive_stream(master_seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return a fresh Generator for (master_seed, purpose, index)."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master_seed, purpose, index)))
