"""Seeded random streams.

Streams come from numpy's Philox4x64 counter-based bit generator, so a seed
maps to the same sequence on every platform. Child seeds are derived through
``numpy.random.SeedSequence`` keyed by integers (repetition, fold, sample ...).
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20210701


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of ``master`` for the path ``keys``."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class Prng:
    """Thin wrapper over a Philox-backed :class:`numpy.random.Generator`."""

    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, *keys: int) -> "Prng":
        return Prng(derive_seed(self.seed, *keys))

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)
