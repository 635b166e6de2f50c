"""Noisy projected-gradient consensus iteration.

Each round every agent broadcasts ``y_i = x_i + w_i`` with Laplace noise
``w_i``, averages what it receives with the round's weights into ``z_i`` and
takes a projected gradient step on its own cost from ``z_i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import laplace_from_uniform, project
from .errors import ParameterError, StructuralError
from .problem import ProblemInstance
from .rng import RandomStream

# scales below this are treated as exactly zero
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class ScheduleParams:
    """Privacy level ``epsilon``, initial step ``c`` and decay rates ``q < p``."""

    epsilon: float
    c: float
    q: float
    p: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ParameterError(f"c must be positive, got {self.c}")
        if not 0 < self.q < 1:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")
        if not self.p < 1:
            raise ParameterError(f"p must be below 1, got {self.p}")
        if not self.p > self.q:
            raise ParameterError(
                f"p={self.p} must exceed q={self.q}; otherwise the privacy budget diverges"
            )

    def replace(self, **kw) -> "ScheduleParams":
        d = {"epsilon": self.epsilon, "c": self.c, "q": self.q, "p": self.p}
        d.update(kw)
        return ScheduleParams(**d)

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "c": self.c, "q": self.q, "p": self.p}


def gamma(params: ScheduleParams, t: int) -> float:
    """Step size ``c * q**(t-1)``."""
    if t < 1:
        raise ParameterError("rounds start at 1")
    return params.c * params.q ** (t - 1)


def noise_scale(params: ScheduleParams, t: int, C2: float, n: int) -> float:
    """Laplace scale ``2 C2 sqrt(n) c p / (eps (p - q)) * p**(t-1)``."""
    if t < 1:
        raise ParameterError("rounds start at 1")
    e, c, q, p = params.epsilon, params.c, params.q, params.p
    m = 2.0 * C2 * math.sqrt(n) * c * p / (e * (p - q)) * p ** (t - 1)
    return 0.0 if m < UNDERFLOW else m


def schedules(params, T, C2, n):
    """Arrays ``(gamma_1..gamma_T, M_1..M_T)``."""
    g = np.array([gamma(params, t) for t in range(1, T + 1)])
    m = np.array([noise_scale(params, t, C2, n) for t in range(1, T + 1)])
    return g, m


def auto_rounds(params, C2, n, tol=1e-6, min_rounds=1, max_rounds=100_000):
    """Smallest ``T`` with both ``gamma_T`` and ``M_T`` below ``tol``."""
    t_gamma = 1 + math.log(tol / params.c) / math.log(params.q)
    m1 = noise_scale(params, 1, C2, n)
    t_noise = 1 + math.log(tol / m1) / math.log(params.p) if m1 > 0 else 1
    T = math.ceil(max(t_gamma, t_noise, 1.0))
    # ceil of an exact integer still leaves the value at tol
    while gamma(params, T) >= tol or noise_scale(params, T, C2, n) >= tol:
        T += 1
    return int(min(max(T, min_rounds), max_rounds))


def _update(problem, A, y, step):
    """Mix broadcasts with ``A`` and take the projected gradient step."""
    z = np.matmul(A, y)
    x = project(problem.domain, z - step * problem.gradients(z))
    return z, x


@dataclass(frozen=True, eq=False)
class RoundRecord:
    t: int
    x_prev: np.ndarray
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_next: np.ndarray


def initial_state(problem: ProblemInstance, policy="anchors", rng=None) -> np.ndarray:
    """Starting estimates ``x(0)`` of shape ``(N, n)``.

    ``policy`` is ``"anchors"`` (quadratic problems only), ``"center"``,
    ``"uniform"`` (needs ``rng``) or an explicit point / ``(N, n)`` array.
    """
    N, n, dom = problem.N, problem.n, problem.domain
    if isinstance(policy, str):
        if policy == "anchors":
            return np.array(problem.anchors, dtype=float)
        if policy == "center":
            return np.tile(dom.center, (N, 1))
        if policy == "uniform":
            if rng is None:
                raise ParameterError("uniform initial state needs a random stream")
            return dom.lower + (dom.upper - dom.lower) * rng.uniforms((N, n))
        raise ParameterError(f"unknown initial-state policy {policy!r}")
    x0 = np.asarray(policy, dtype=float)
    if x0.shape == (n,):
        x0 = np.tile(x0, (N, 1))
    if x0.shape != (N, n):
        raise StructuralError(f"x0 must have shape {(N, n)}, got {x0.shape}")
    if not dom.contains(x0):
        raise ParameterError("x0 must lie inside the domain")
    return x0.copy()


def default_x0(problem):
    """Anchors for quadratic problems, the domain centre otherwise."""
    return initial_state(problem, "anchors" if problem.is_quadratic else "center")


def step(problem, params, x, t, rng: RandomStream, scale=None) -> RoundRecord:
    """Execute round ``t`` from states ``x`` (shape ``(N, n)``).

    Draws ``N * n`` uniforms from ``rng`` in (agent, component) order.
    ``scale`` overrides the Laplace scale, e.g. ``0.0`` for a noiseless round.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.N, problem.n):
        raise StructuralError(f"state must have shape {(problem.N, problem.n)}")
    M = noise_scale(params, t, problem.constants.C2, problem.n) if scale is None else scale
    w = laplace_from_uniform(rng.uniforms(x.shape), M) + 0.0
    y = x + w
    z, x_next = _update(problem, problem.graph.matrix_at(t), y, gamma(params, t))
    return RoundRecord(t, x, w, y, z, x_next)


@dataclass(frozen=True, eq=False)
class ExecutionTrace:
    problem: ProblemInstance
    params: ScheduleParams
    seed: int
    x0: np.ndarray
    records: tuple

    @property
    def T(self) -> int:
        return len(self.records)

    def observations(self) -> np.ndarray:
        """Adversary view ``y(1..T)`` as a ``(T, N, n)`` array."""
        return np.stack([r.y for r in self.records])

    def states(self) -> np.ndarray:
        """``x(0..T)`` as a ``(T+1, N, n)`` array."""
        return np.stack([self.x0] + [r.x_next for r in self.records])

    def noise(self) -> np.ndarray:
        return np.stack([r.w for r in self.records])

    def state(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.T:
            raise ParameterError(f"round {t} outside 0..{self.T}")
        return self.x0 if t == 0 else self.records[t - 1].x_next

    def to_csv(self, path):
        """Long-format export: one row per (round, agent, component)."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["round", "agent", "component", "x", "w", "y", "z"])
            for r in self.records:
                for i in range(self.problem.N):
                    for k in range(self.problem.n):
                        out.writerow([r.t, i, k, repr(float(r.x_next[i, k])),
                                      repr(float(r.w[i, k])), repr(float(r.y[i, k])),
                                      repr(float(r.z[i, k]))])

    def observations_to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["round", "agent", "component", "y"])
            for r in self.records:
                for i in range(self.problem.N):
                    for k in range(self.problem.n):
                        out.writerow([r.t, i, k, repr(float(r.y[i, k]))])


def run(problem, params, T, seed, x0=None, noise=True) -> ExecutionTrace:
    """Run ``T`` rounds; the noise for trial ``seed`` comes from ``RandomStream(seed)``."""
    if T < 1:
        raise ParameterError("T must be at least 1")
    x = default_x0(problem) if x0 is None else initial_state(problem, x0)
    rng = RandomStream(seed)
    records = []
    start = x
    for t in range(1, T + 1):
        rec = step(problem, params, x, t, rng, scale=None if noise else 0.0)
        records.append(rec)
        x = rec.x_next
    return ExecutionTrace(problem, params, seed, start, tuple(records))


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Vectorised trials; ``states`` and ``observations`` only when recorded."""

    final: np.ndarray
    states: np.ndarray | None = None
    observations: np.ndarray | None = None
    noise_norms: np.ndarray | None = None


def run_batch(problem, params, T, streams, x0=None, record=False, noise=True) -> BatchResult:
    """Run one trial per stream in lock-step.

    Trial ``b`` consumes ``streams[b]`` exactly as :func:`run` consumes
    ``RandomStream(seed)``, so ``run_batch(..., [RandomStream(s)])`` and
    ``run(..., seed=s)`` agree bit for bit.  ``noise_norms`` holds
    ``max_i ||w_i(t)||_2`` per trial and round.
    """
    if T < 1:
        raise ParameterError("T must be at least 1")
    N, n = problem.N, problem.n
    B = len(streams)
    base = default_x0(problem) if x0 is None else initial_state(problem, x0)
    U = np.stack([s.uniforms((T, N, n)) for s in streams]) if B else np.empty((0, T, N, n))
    gammas, scales = schedules(params, T, problem.constants.C2, n)
    if not noise:
        scales = np.zeros_like(scales)
    x = np.broadcast_to(base, (B, N, n)).copy()
    states = np.empty((B, T + 1, N, n)) if record else None
    obs = np.empty((B, T, N, n)) if record else None
    wn = np.empty((B, T))
    if record:
        states[:, 0] = x
    for t in range(1, T + 1):
        w = laplace_from_uniform(U[:, t - 1], scales[t - 1]) + 0.0
        y = x + w
        _, x = _update(problem, problem.graph.matrix_at(t), y, gammas[t - 1])
        wn[:, t - 1] = np.linalg.norm(w, axis=-1).max(axis=-1)
        if record:
            states[:, t] = x
            obs[:, t - 1] = y
    return BatchResult(x, states, obs, wn)


def replay(problem, params, observations, x0=None) -> np.ndarray:
    """Reconstruct ``x(0..T)`` from broadcasts ``y(1..T)``.

    ``observations`` has shape ``(..., T, N, n)``; the result has shape
    ``(..., T+1, N, n)``.  No randomness is involved: given the broadcasts,
    each round's aggregate and update are deterministic.
    """
    y = np.asarray(observations, dtype=float)
    N, n = problem.N, problem.n
    if y.ndim < 3 or y.shape[-2:] != (N, n):
        raise StructuralError(f"observations must end in (T, {N}, {n}), got {y.shape}")
    T = y.shape[-3]
    x0 = default_x0(problem) if x0 is None else initial_state(problem, x0)
    out = np.empty(y.shape[:-3] + (T + 1, N, n))
    out[..., 0, :, :] = x0
    for t in range(1, T + 1):
        _, out[..., t, :, :] = _update(
            problem, problem.graph.matrix_at(t), y[..., t - 1, :, :], gamma(params, t)
        )
    return out


def validate_trace(trace: ExecutionTrace, atol=1e-12):
    """Return the rounds whose record breaks one of its defining equalities."""
    problem, bad = trace.problem, []
    prev = trace.x0
    for r in trace.records:
        A = problem.graph.matrix_at(r.t)
        g = gamma(trace.params, r.t)
        expect_x = project(problem.domain, r.z - g * problem.gradients(r.z))
        ok = (
            np.array_equal(r.x_prev, prev)
            and np.array_equal(r.y, r.x_prev + r.w)
            and np.max(np.abs(r.z - A @ r.y)) <= atol
            and np.max(np.abs(r.x_next - expect_x)) <= atol
            and problem.domain.contains(r.x_next)
        )
        if not ok:
            bad.append(r.t)
        prev = r.x_next
    return bad


def pairwise_disagreement(x) -> np.ndarray:
    """``max_{i,j} ||x_i - x_j||_2`` over the agent axis of ``(..., N, n)``."""
    x = np.asarray(x, dtype=float)
    diff = x[..., :, None, :] - x[..., None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)).max(axis=(-2, -1))


def disagreement(trace: ExecutionTrace, t: int) -> float:
    return float(pairwise_disagreement(trace.state(t)))


def mean_estimate(trace: ExecutionTrace, t: int) -> np.ndarray:
    return trace.state(t).mean(axis=0)
