"""Splittable counter-based random streams.

Every stream is a Philox generator whose key is derived from a master seed
and a path of integers, e.g. ``(eps_index, trial)``.  Within a stream the
draws for round ``t``, agent ``i`` and component ``k`` sit at a fixed counter
position, so any single trial can be regenerated in isolation.
"""

from __future__ import annotations

import numpy as np

_TWO_53 = float(2**53)


class RandomStream:
    """Deterministic uniform source keyed by ``(seed, *path)``.

    Parameters
    ----------
    seed : int
        Master seed (any non-negative integer).
    *path : int
        Stream identifiers.  Two streams with different paths are
        statistically independent.
    """

    __slots__ = ("seed", "path", "_bitgen")

    def __init__(self, seed: int, *path: int):
        if seed < 0 or any(p < 0 for p in path):
            raise ValueError("seed and path entries must be non-negative")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._bitgen = np.random.Philox(seq)

    def child(self, *path: int) -> "RandomStream":
        """Return the independent sub-stream ``(seed, *self.path, *path)``."""
        return RandomStream(self.seed, *self.path, *path)

    def uniforms(self, shape=()) -> np.ndarray:
        """Draw uniforms on the open interval (0, 1).

        Uses the top 53 bits of each raw 64-bit word, offset by half a unit so
        neither endpoint can occur.
        """
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        shape = tuple(shape)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self._bitgen.random_raw(size)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO_53
        if not shape:
            return u[0]
        return u.reshape(shape)

    def uniform(self) -> float:
        return float(self.uniforms())

    def uniform_in(self, lower, upper) -> np.ndarray:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        u = self.uniforms(np.broadcast_shapes(lower.shape, upper.shape))
        return lower + (upper - lower) * u

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={self.path})"
