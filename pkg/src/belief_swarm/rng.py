"""Seedable counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *path)`` through
:class:`numpy.random.SeedSequence`. Paths are built from drone indices,
episode indices and purpose names, so a stream's draws never depend on how
many other streams exist or in which order they were consumed.
"""

from __future__ import annotations

import numpy as np

# Purpose keys live far above any drone or episode index so they never collide.
_PURPOSE_BASE = 1 << 40
PURPOSES = {
    "initial": _PURPOSE_BASE + 0,
    "consumption": _PURPOSE_BASE + 1,
    "observation": _PURPOSE_BASE + 2,
    "exploration": _PURPOSE_BASE + 3,
    "replay": _PURPOSE_BASE + 4,
    "init": _PURPOSE_BASE + 5,
    "train": _PURPOSE_BASE + 6,
    "eval": _PURPOSE_BASE + 7,
}


def _key(k) -> int:
    if isinstance(k, str):
        try:
            return PURPOSES[k]
        except KeyError:
            raise ValueError(f"unknown stream purpose {k!r}") from None
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


class RandomSource:
    """A named random stream.

    Identical ``(seed, path)`` and an identical call sequence give an
    identical draw sequence. Instances are not thread-safe; hand one to a
    single owner at a time.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple = ()):
        seed = int(seed)
        if seed < 0 or seed >= 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.path = tuple(_key(k) for k in path)
        self._gen = None

    def child(self, *keys) -> "RandomSource":
        return RandomSource(self.seed, self.path + tuple(_key(k) for k in keys))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def normal(self, size=None):
        """Standard normal draw(s)."""
        out = self.generator.standard_normal(size)
        return float(out) if size is None else out

    def uniform(self, low=0.0, high=1.0, size=None):
        out = self.generator.uniform(low, high, size)
        return float(out) if size is None else out

    def integers(self, low, high, size=None):
        return self.generator.integers(low, high, size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={self.path})"
