"""Vector primitives, box projection and the Laplace distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructuralError
from .rng import RandomStream


def as_vector(x, n=None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float array, optionally of length ``n``."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise StructuralError(f"expected a 1-d vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise StructuralError(f"expected length {n}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ParameterError("vector has non-finite components")
    return v


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Axis-aligned box ``{x : lower <= x <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower)
        hi = as_vector(self.upper, lo.shape[0])
        if not np.all(lo < hi):
            raise ParameterError("box needs lower[k] < upper[k] for every k")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0) -> "BoxDomain":
        return cls(np.full(n, -half_width), np.full(n, half_width))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def max_norm(self) -> float:
        """``sup_{x in box} ||x||_2``, attained at a corner."""
        far = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return float(np.linalg.norm(far))

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def corners(self) -> np.ndarray:
        n = self.dim
        bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        return np.where(bits == 1, self.upper, self.lower)

    def __eq__(self, other):
        if not isinstance(other, BoxDomain):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(
            self.upper, other.upper
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


def project(domain: BoxDomain, x) -> np.ndarray:
    """Euclidean projection onto ``domain``.

    For a box this is a componentwise clamp.  ``x`` may carry leading batch
    axes; the last axis must match the domain dimension.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != domain.dim:
        raise StructuralError(
            f"point of shape {x.shape} does not match a {domain.dim}-d domain"
        )
    return np.clip(x, domain.lower, domain.upper)


def laplace_from_uniform(u, scale):
    """Inverse-CDF transform of ``u`` in (0, 1) to a Lap(scale) draw."""
    u = np.asarray(u, dtype=float)
    d = u - 0.5
    return -scale * np.sign(d) * np.log1p(-2.0 * np.abs(d))


def laplace_sample(rng: RandomStream, scale: float) -> float:
    """One draw from Lap(scale), consuming exactly one uniform from ``rng``."""
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    return float(laplace_from_uniform(rng.uniform(), scale))


def laplace_log_density(scale, x):
    """``log(1/(2 scale)) - |x|/scale``; broadcasts over arrays."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ParameterError("Laplace scale must be positive")
    out = -np.log(2.0 * scale) - np.abs(x) / scale
    return float(out) if np.ndim(out) == 0 else out


def norm1(x) -> float:
    return float(np.sum(np.abs(np.asarray(x, dtype=float))))


def norm2(x) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float).ravel()))


def geometric_tail_limit(beta: float, sequence) -> float:
    """Return ``sum_{s=1}^{t} beta**(t-s) * a_s`` with ``t = len(sequence)``.

    Evaluated by Horner's rule, so long sequences neither overflow nor lose
    the late terms.
    """
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    acc = 0.0
    for a in sequence:
        acc = beta * acc + float(a)
    return acc

