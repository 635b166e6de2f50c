"""Private distributed optimization problem instances.

A problem bundles a box domain, one cost function per agent, the
communication schedule and the three constants the analysis depends on:
the domain diameter ``C1``, a uniform gradient bound ``C2`` and a strong
convexity modulus ``C3``.  Constants are audited by sampling when the
instance is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np

from .core import BoxDomain, as_vector, project
from .errors import ConvergenceError, ParameterError, StructuralError
from .graphs import GraphSchedule
from .rng import RandomStream

_ANCHOR_STREAM = 0
_AUDIT_STREAM = 2


class Cost(Protocol):
    dim: int

    def value(self, x: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``f(x) = ||x - anchor||^2``; batch axes in ``x`` are allowed."""

    anchor: np.ndarray

    def __post_init__(self):
        a = as_vector(self.anchor).copy()
        a.setflags(write=False)
        object.__setattr__(self, "anchor", a)

    @property
    def dim(self) -> int:
        return self.anchor.shape[0]

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.anchor
        return np.sum(d * d, axis=-1)

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.anchor)

    def __eq__(self, other):
        return isinstance(other, QuadraticCost) and np.array_equal(
            self.anchor, other.anchor
        )

    def __hash__(self):
        return hash(self.anchor.tobytes())


@dataclass(frozen=True)
class CallableCost:
    """A cost given by user-supplied value and gradient closures."""

    dim: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "callable"

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.gradient_fn(np.asarray(x, dtype=float))


def _check_point(cost, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != cost.dim:
        raise StructuralError(
            f"point of shape {x.shape} does not match cost dimension {cost.dim}"
        )
    return x


def eval_cost(cost: Cost, x):
    out = cost.value(_check_point(cost, x))
    return float(out) if np.ndim(out) == 0 else out


def eval_gradient(cost: Cost, x) -> np.ndarray:
    return np.asarray(cost.gradient(_check_point(cost, x)), dtype=float)


@dataclass(frozen=True)
class CostConstants:
    C1: float
    C2: float
    C3: float

    def __post_init__(self):
        for name in ("C1", "C2", "C3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive and finite, got {v}")

    @classmethod
    def for_quadratics(cls, domain: BoxDomain) -> "CostConstants":
        """Closed form for ``||x - a||^2`` with ``a`` and ``x`` in ``domain``."""
        C1 = domain.diameter
        return cls(C1=C1, C2=2.0 * C1, C3=2.0)


def audit_constants(domain, costs, constants, samples=1000, seed=0):
    """Sample-based certificate for the gradient bound and strong convexity.

    Raises :class:`ParameterError` naming the first offending cost.  Box
    corners are added to the gradient sample when ``n <= 10``.
    """
    stream = RandomStream(seed, _AUDIT_STREAM)
    n = domain.dim
    xs = stream.uniform_in(
        np.broadcast_to(domain.lower, (samples, n)),
        np.broadcast_to(domain.upper, (samples, n)),
    )
    ys = stream.uniform_in(
        np.broadcast_to(domain.lower, (samples, n)),
        np.broadcast_to(domain.upper, (samples, n)),
    )
    grad_pts = np.vstack([xs, domain.corners()]) if n <= 10 else xs
    for idx, g in enumerate(costs):
        norms = np.linalg.norm(eval_gradient(g, grad_pts), axis=-1)
        if norms.max() > constants.C2 + 1e-12:
            raise ParameterError(
                f"cost {idx}: gradient norm {norms.max():.6g} exceeds C2={constants.C2:.6g}"
            )
        gx, gy = eval_cost(g, xs), eval_cost(g, ys)
        lhs = np.sum(eval_gradient(g, xs) * (ys - xs), axis=-1)
        rhs = gy - gx - 0.5 * constants.C3 * np.sum((ys - xs) ** 2, axis=-1)
        slack = 1e-12 * np.maximum(1.0, np.abs(gx) + np.abs(gy))
        if np.any(lhs > rhs + slack):
            raise ParameterError(
                f"cost {idx}: strong convexity with C3={constants.C3:.6g} fails on a sampled pair"
            )


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Immutable problem: domain, per-agent costs, schedule and constants."""

    domain: BoxDomain
    costs: tuple
    graph: GraphSchedule
    constants: CostConstants
    audit_samples: int = field(default=1000, repr=False)

    def __post_init__(self):
        costs = tuple(self.costs)
        object.__setattr__(self, "costs", costs)
        if len(costs) < 2:
            raise ParameterError("a problem needs at least two agents")
        if self.graph.N != len(costs):
            raise StructuralError(
                f"graph has {self.graph.N} agents but {len(costs)} costs were given"
            )
        for idx, g in enumerate(costs):
            if g.dim != self.domain.dim:
                raise StructuralError(
                    f"cost {idx} has dimension {g.dim}, domain has {self.domain.dim}"
                )
            if isinstance(g, QuadraticCost) and not self.domain.contains(g.anchor):
                raise ParameterError(f"anchor of cost {idx} lies outside the domain")
        if self.constants.C1 < self.domain.diameter * (1 - 1e-12):
            raise ParameterError("C1 is smaller than the domain diameter")
        if self.audit_samples:
            audit_constants(self.domain, costs, self.constants, self.audit_samples)
        anchors = None
        if all(isinstance(g, QuadraticCost) for g in costs):
            anchors = np.stack([g.anchor for g in costs])
            anchors.setflags(write=False)
        object.__setattr__(self, "_anchors", anchors)

    @property
    def N(self) -> int:
        return len(self.costs)

    @property
    def n(self) -> int:
        return self.domain.dim

    @property
    def is_quadratic(self) -> bool:
        return self._anchors is not None

    @property
    def anchors(self) -> np.ndarray:
        if self._anchors is None:
            raise AttributeError("anchors exist only for all-quadratic problems")
        return self._anchors

    def gradients(self, z) -> np.ndarray:
        """Stack ``grad f_i(z_i)`` for ``z`` of shape ``(..., N, n)``."""
        z = np.asarray(z, dtype=float)
        if z.shape[-2:] != (self.N, self.n):
            raise StructuralError(f"expected trailing shape {(self.N, self.n)}, got {z.shape}")
        if self._anchors is not None:
            return 2.0 * (z - self._anchors)
        return np.stack(
            [eval_gradient(g, z[..., i, :]) for i, g in enumerate(self.costs)], axis=-2
        )

    def total_cost(self, x) -> float:
        return float(sum(eval_cost(g, x) for g in self.costs))

    def with_cost(self, agent: int, cost) -> "ProblemInstance":
        costs = list(self.costs)
        costs[agent] = cost
        return ProblemInstance(
            self.domain, tuple(costs), self.graph, self.constants, self.audit_samples
        )


class Optimum(NamedTuple):
    x_star: np.ndarray
    f_star: float
    numerical: bool


def optimum_of_costs(domain: BoxDomain, costs: Sequence, tol=1e-10, max_iter=100_000):
    """Minimize ``sum(costs)`` over ``domain``.

    All-quadratic sums are minimized exactly at the projected centroid.  Other
    sums go through projected gradient descent with backtracking.
    """
    costs = list(costs)
    if costs and all(isinstance(g, QuadraticCost) for g in costs):
        anchors = np.stack([g.anchor for g in costs])
        x = project(domain, anchors.mean(axis=0))
        f = float(np.sum((x - anchors) ** 2))
        return Optimum(x, f, False)

    def total(x):
        return float(sum(eval_cost(g, x) for g in costs))

    def grad(x):
        return sum(eval_gradient(g, x) for g in costs)

    x = domain.center.copy()
    fx = total(x)
    step = 1.0
    for _ in range(max_iter):
        g = grad(x)
        while True:
            cand = project(domain, x - step * g)
            fc = total(cand)
            move = cand - x
            if fc <= fx + g @ move + np.dot(move, move) / (2 * step) or step < 1e-300:
                break
            step *= 0.5
        if np.linalg.norm(move) <= tol:
            return Optimum(cand, fc, True)
        x, fx = cand, fc
        step *= 2.0
    raise ConvergenceError(f"projected gradient did not reach tol={tol} in {max_iter} steps")


def global_optimum(problem: ProblemInstance) -> Optimum:
    return optimum_of_costs(problem.domain, problem.costs)


def make_rendezvous(n=2, N=5, domain=None, seed=0, graph=None) -> ProblemInstance:
    """Rendezvous instance: each agent's cost is its squared distance to a
    private address drawn uniformly from ``domain`` (default ``[-1, 1]^n``)."""
    if N < 2:
        raise ParameterError("rendezvous needs N >= 2")
    domain = domain if domain is not None else BoxDomain.cube(n)
    if domain.dim != n:
        raise StructuralError("domain dimension does not match n")
    stream = RandomStream(seed, _ANCHOR_STREAM)
    anchors = domain.lower + (domain.upper - domain.lower) * stream.uniforms((N, n))
    graph = graph if graph is not None else GraphSchedule("ring", N)
    return ProblemInstance(
        domain,
        tuple(QuadraticCost(a) for a in anchors),
        graph,
        CostConstants.for_quadratics(domain),
    )


def problem_from_anchors(anchors, domain=None, graph=None) -> ProblemInstance:
    anchors = np.asarray(anchors, dtype=float)
    N, n = anchors.shape
    domain = domain if domain is not None else BoxDomain.cube(n)
    graph = graph if graph is not None else GraphSchedule("ring", N)
    return ProblemInstance(
        domain,
        tuple(QuadraticCost(a) for a in anchors),
        graph,
        CostConstants.for_quadratics(domain),
    )


@dataclass(frozen=True, eq=False)
class AdjacentPair:
    """Two problems differing only in the cost of ``changed_agent``."""

    base: ProblemInstance
    variant: ProblemInstance
    changed_agent: int

    def __post_init__(self):
        b, v, i = self.base, self.variant, self.changed_agent
        if b.domain != v.domain or b.graph != v.graph or b.constants != v.constants:
            raise ParameterError("adjacent problems must share domain, graph and constants")
        if b.N != v.N:
            raise StructuralError("adjacent problems must have the same agent count")
        for j in range(b.N):
            same = b.costs[j] is v.costs[j] or b.costs[j] == v.costs[j]
            if j == i and same:
                raise ParameterError(f"cost of agent {i} is unchanged; problems are not adjacent")
            if j != i and not same:
                raise ParameterError(f"cost of agent {j} differs but only agent {i} may change")


def make_adjacent(problem: ProblemInstance, agent: int, new_anchor) -> AdjacentPair:
    """Replace agent ``agent``'s anchor, keeping everything else shared."""
    if not 0 <= agent < problem.N:
        raise ParameterError(f"agent index {agent} out of range")
    old = problem.costs[agent]
    new_anchor = as_vector(new_anchor, problem.n)
    if isinstance(old, QuadraticCost) and np.array_equal(old.anchor, new_anchor):
        raise ParameterError("new anchor equals the old one; the pair would not be adjacent")
    if not problem.domain.contains(new_anchor):
        raise ParameterError("new anchor lies outside the domain")
    return AdjacentPair(problem, problem.with_cost(agent, QuadraticCost(new_anchor)), agent)
