"""Accuracy bound, convergence envelope and parameter tuning.

The accuracy bound is

    d = C1 exp(-C3 c / (1 - q)) + C2^2 c^2 / (1 - q^2)
        + 8 C2^2 n c^2 p^2 / (eps^2 (p - q)^2 (1 - p^2))

and tuning is cyclic coordinate descent on ``d``: each coordinate is moved
to the minimiser of ``d`` along that axis with the other two held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import bisect

from .engine import ScheduleParams
from .errors import ParameterError
from .graphs import ConvergenceEnvelope
from .problem import CostConstants
from .rng import RandomStream

Q_MARGIN = 1e-6


def _terms(C, n, eps, c, q, p):
    init = C.C1 * np.exp(-C.C3 * c / (1.0 - q))
    step = C.C2**2 * c**2 / (1.0 - q**2)
    noise = 8.0 * C.C2**2 * n * c**2 * p**2 / (eps**2 * (p - q) ** 2 * (1.0 - p**2))
    return init, step, noise


def accuracy_d(constants, n, eps, c, q, p):
    """Vectorised ``d``; arguments broadcast."""
    return sum(_terms(constants, n, eps, c, q, p))


@dataclass(frozen=True)
class AccuracyBound:
    """The three terms of ``d``.

    ``d_conservative`` doubles the first term, matching the initial-error
    bound carried through the derivation before the final statement.
    """

    term_init: float
    term_step: float
    term_noise: float

    @property
    def d(self) -> float:
        return self.term_init + self.term_step + self.term_noise

    @property
    def d_conservative(self) -> float:
        return 2.0 * self.term_init + self.term_step + self.term_noise


def accuracy_bound(constants: CostConstants, n: int, params: ScheduleParams) -> AccuracyBound:
    if not 0 < params.q < params.p < 1:
        raise ParameterError("accuracy bound needs 0 < q < p < 1")
    init, step, noise = _terms(constants, n, params.epsilon, params.c, params.q, params.p)
    return AccuracyBound(float(init), float(step), float(noise))


# --- stationarity conditions -------------------------------------------------

def c_residual(constants, n, eps, c, q, p):
    """``-dd/dc``: positive below the optimal step, negative above it."""
    C = constants
    K = 1.0 / (1.0 - q**2) + 8.0 * n * p**2 / (eps**2 * (p - q) ** 2 * (1.0 - p**2))
    return C.C1 * C.C3 / (1.0 - q) * np.exp(-C.C3 * c / (1.0 - q)) - 2.0 * C.C2**2 * c * K


def q_derivative(constants, n, eps, c, q, p):
    """``dd/dq``."""
    C = constants
    return (
        -C.C1 * C.C3 * c / (1.0 - q) ** 2 * np.exp(-C.C3 * c / (1.0 - q))
        + 2.0 * q * C.C2**2 * c**2 / (1.0 - q**2) ** 2
        + 16.0 * C.C2**2 * n * c**2 * p**2 / (eps**2 * (p - q) ** 3 * (1.0 - p**2))
    )


def p_residual(q, p):
    """``q (1 - p^2) - p^2 (p - q)``; zero exactly at the optimal noise decay."""
    return q * (1.0 - p**2) - p**2 * (p - q)


def solve_c_star(constants, n, eps, q, p, tol=1e-300) -> float:
    """Unique minimiser of ``d`` in ``c`` by bracketed bisection.

    The residual is strictly decreasing in ``c`` and positive at 0, so
    doubling ``c_hi`` until the sign flips brackets the only root.
    """
    f = lambda c: c_residual(constants, n, eps, c, q, p)
    lo, hi = 1e-12, 1.0
    while f(hi) > 0:
        lo, hi = hi, 2.0 * hi
    if f(lo) <= 0:
        return lo
    return bisect(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


class QSolution(NamedTuple):
    q: float
    interior: bool


def solve_q_star(constants, n, eps, c, p, grid=4000) -> QSolution:
    """Best local minimiser of ``d`` in ``q`` on ``(0, p)``.

    ``d`` need not be unimodal in ``q``, so every sign change of the
    derivative from negative to positive on a grid is refined by bisection.
    The candidate with the smallest ``d`` wins; the interval endpoints compete
    too and win with ``interior=False``.
    """
    lo, hi = Q_MARGIN, p - Q_MARGIN
    if hi <= lo:
        raise ParameterError("p is too small to leave room for q")
    f = lambda q: q_derivative(constants, n, eps, c, q, p)
    # denser sampling near p where the noise term has its pole
    u = np.linspace(0.0, 1.0, grid)
    qs = lo + (hi - lo) * (1.0 - (1.0 - u) ** 2)
    ds = f(qs)
    cands = [(lo, False), (hi, False)]
    for k in np.flatnonzero((ds[:-1] < 0) & (ds[1:] > 0)):
        r = bisect(f, qs[k], qs[k + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
        cands.append((r, True))
    vals = [accuracy_d(constants, n, eps, c, q, p) for q, _ in cands]
    best = int(np.argmin(vals))
    return QSolution(float(cands[best][0]), cands[best][1])


def solve_p_star(q: float) -> float:
    """Closed form ``q**(1/3)``: the optimality condition reduces to ``p^3 = q``."""
    if not 0 < q < 1:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    return q ** (1.0 / 3.0)


def solve_p_star_numeric(q: float) -> float:
    """Root of :func:`p_residual` on ``(q, 1)`` by bisection (cross-check)."""
    if not 0 < q < 1:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    return bisect(lambda p: p_residual(q, p), q, 1.0, xtol=1e-16,
                  rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class TuningResult:
    params: ScheduleParams
    d_achieved: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)


def tune(constants, n, eps, initial: ScheduleParams, passes=20, rtol=1e-10) -> TuningResult:
    """Cyclic coordinate descent on ``d`` in the order c, p, q.

    A coordinate move is accepted only if it does not increase ``d``;
    ``history`` records ``d`` after every move.
    """
    if passes < 1:
        raise ParameterError("passes must be at least 1")
    c, q, p = initial.c, initial.q, initial.p
    d = float(accuracy_d(constants, n, eps, c, q, p))
    history = [d]
    converged = False
    done = 0
    for done in range(1, passes + 1):
        start = d
        for coord in ("c", "p", "q"):
            if coord == "c":
                cand = (solve_c_star(constants, n, eps, q, p), q, p)
            elif coord == "p":
                cand = (c, q, solve_p_star(q))
            else:
                cand = (c, solve_q_star(constants, n, eps, c, p).q, p)
            dc = float(accuracy_d(constants, n, eps, *cand))
            if dc <= d:
                c, q, p = cand
                d = dc
            history.append(d)
        if start - d <= rtol * abs(start):
            converged = True
            break
    params = ScheduleParams(eps, c, q, p)
    return TuningResult(params, d, done, converged, tuple(history))


def random_initial(eps, stream: RandomStream) -> ScheduleParams:
    """Random start: ``c`` log-uniform on [1e-3, 1], ``q`` uniform, ``p`` in (q, 1)."""
    u = stream.uniforms(3)
    c = 10 ** (-3 + 3 * u[0])
    q = 0.01 + 0.97 * u[1]
    p = q + (1 - q) * (0.05 + 0.9 * u[2])
    return ScheduleParams(eps, c, q, p)


def tune_multistart(constants, n, eps, starts=10, seed=0, passes=20,
                    initial: ScheduleParams | None = None) -> TuningResult:
    """Run :func:`tune` from ``initial`` (if given) plus ``starts`` random
    points and keep the smallest ``d``."""
    inits = [] if initial is None else [initial.replace(epsilon=eps)]
    inits += [random_initial(eps, RandomStream(seed, k)) for k in range(starts)]
    results = [tune(constants, n, eps, p0, passes) for p0 in inits]
    return min(results, key=lambda r: r.d_achieved)


# --- consensus envelope -------------------------------------------------------

def envelope_constants(env: ConvergenceEnvelope, constants, N, sup_norm):
    """``(M1, M2, M3) = (2 N theta sup||x||, 2 N C2 theta, 2 N theta)``."""
    t2 = 2.0 * N * env.theta
    return t2 * sup_norm, t2 * constants.C2, t2


def convergence_bound(env: ConvergenceEnvelope, constants, N, params, noise_norms, t,
                      sup_norm) -> float:
    """Upper bound on ``||x_i(t) - x_j(t)||`` for any pair of agents.

    ``noise_norms[s-1]`` is the noise magnitude of round ``s``; callers pass
    the maximum over agents.
    """
    noise_norms = np.asarray(noise_norms, dtype=float)
    if t > noise_norms.shape[0]:
        raise ParameterError("t exceeds the recorded noise horizon")
    M1, M2, M3 = envelope_constants(env, constants, N, sup_norm)
    if t == 0:
        return M1
    return float(convergence_bound_series(env, M1, M2, M3, params, noise_norms[:t])[-1])


def convergence_bound_series(env, M1, M2, M3, params, noise_norms) -> np.ndarray:
    """Bound for every ``t = 1..len(noise_norms)`` via the recursions
    ``G_t = beta G_{t-1} + gamma_t`` and ``W_t = beta (W_{t-1} + ||w(t)||)``."""
    b = env.beta
    T = len(noise_norms)
    gammas = params.c * params.q ** np.arange(T)
    out = np.empty(T)
    G = W = 0.0
    for t in range(1, T + 1):
        G = b * G + gammas[t - 1]
        W = b * (W + noise_norms[t - 1])
        out[t - 1] = M1 * b**t + M2 * G + M3 * W
    return out
