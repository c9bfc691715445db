"""Seeded random streams so every training run is replayable."""

from __future__ import annotations

import numpy as np


class RngStream:
    """A counted wrapper around numpy's PCG64 generator.

    The same seed and the same sequence of calls always produce the same
    draws.  ``derive`` builds an independent child stream from (seed, tag),
    which is how per-sample / per-window seeds are minted.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def _bump(self):
        self.counter += 1

    def normal(self, size=None, dtype=np.float64):
        self._bump()
        return self._gen.standard_normal(size=size).astype(dtype, copy=False)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        self._bump()
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the closed range [low, high]."""
        self._bump()
        return self._gen.integers(low, high, size=size, endpoint=True)

    def shuffle(self, x) -> None:
        self._bump()
        self._gen.shuffle(x)

    def choice_index(self, probs: np.ndarray) -> int:
        self._bump()
        p = np.asarray(probs, dtype=np.float64)
        p /= p.sum()  # float32 softmax sums drift off 1.0
        return int(self._gen.choice(len(p), p=p))

    def derive(self, tag: int) -> "RngStream":
        """Deterministic child stream; independent of this stream's counter."""
        mixed = np.random.SeedSequence([self.seed, int(tag)])
        child = RngStream.__new__(RngStream)
        child.seed = int(mixed.generate_state(1, np.uint64)[0])
        child.counter = 0
        child._gen = np.random.Generator(np.random.PCG64(mixed))
        return child
