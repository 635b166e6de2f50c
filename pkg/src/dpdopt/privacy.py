"""Privacy accounting and empirical checks.

The analytic side gives the per-round sensitivity bound and the budget
series ``sum Delta(t) / M_t``.  The empirical side replays both problems of
an adjacent pair against the *same* broadcasts, which pins down each
execution uniquely, and compares exact Laplace likelihoods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import laplace_log_density
from .engine import ScheduleParams, default_x0, initial_state, replay, run_batch, schedules
from .errors import StructuralError
from .problem import AdjacentPair, CostConstants
from .rng import RandomStream


@dataclass(frozen=True, eq=False)
class SensitivityProfile:
    per_round: np.ndarray
    horizon: int


def sensitivity_bound(constants: CostConstants, n: int, params: ScheduleParams, T: int):
    """``Delta(t) = 2 C2 sqrt(n) c q**(t-1)`` for ``t = 1..T``."""
    t = np.arange(T)
    per_round = 2.0 * constants.C2 * math.sqrt(n) * params.c * params.q**t
    return SensitivityProfile(per_round, T)


@dataclass(frozen=True, eq=False)
class BudgetReport:
    """Per-round ratios ``Delta(t)/M_t`` and their sums.

    ``lagged_partial_sums`` accumulate ``Delta(t-1)/M_t``: the broadcast of
    round ``t`` masks the state left by round ``t-1``, so this is the series
    that actually bounds the pointwise likelihood ratio.  Its limit is
    ``epsilon / p``.
    """

    epsilon_target: float
    per_round_ratio: np.ndarray
    partial_sums: np.ndarray
    infinite_sum: float
    lagged_partial_sums: np.ndarray
    lagged_infinite_sum: float
    passed: bool

    @property
    def finite_horizon_budget(self) -> float:
        return float(self.partial_sums[-1])

    def rows(self):
        for t in range(len(self.per_round_ratio)):
            yield (t + 1, float(self.per_round_ratio[t]), float(self.partial_sums[t]),
                   float(self.lagged_partial_sums[t]))


def budget(constants: CostConstants, n: int, params: ScheduleParams, T: int) -> BudgetReport:
    e, q, p = params.epsilon, params.q, params.p
    delta = sensitivity_bound(constants, n, params, T).per_round
    _, scales = schedules(params, T, constants.C2, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scales > 0, delta / scales, np.inf)
    # telescoped partial sums eps * (1 - (q/p)^t); a running float sum of the
    # ratios can overshoot eps by a few ulps
    t = np.arange(1, T + 1)
    partial = -e * np.expm1(t * math.log(q / p))
    partial = np.where(np.isfinite(ratio), partial, np.inf)
    lagged = np.concatenate([[0.0], delta[:-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        lagged_ratio = np.where(scales > 0, lagged / scales, np.where(lagged > 0, np.inf, 0.0))
    first = e * (p - q) / p
    infinite = first / (1.0 - q / p)
    passed = bool(np.all(partial <= e * (1 + 1e-9)))
    return BudgetReport(
        epsilon_target=e,
        per_round_ratio=ratio,
        partial_sums=partial,
        infinite_sum=infinite,
        lagged_partial_sums=np.cumsum(lagged_ratio),
        lagged_infinite_sum=infinite / p,
        passed=passed,
    )


def _check_obs(pair, observations):
    y = np.asarray(observations, dtype=float)
    N, n = pair.base.N, pair.base.n
    if y.ndim < 3 or y.shape[-2:] != (N, n):
        raise StructuralError(f"observations must end in (T, {N}, {n}), got {y.shape}")
    return y


def shared_x0(pair, x0=None) -> np.ndarray:
    """Initial state used by both sides of ``pair``.

    Adjacent executions must start from the same point; otherwise ``x(0)``
    itself carries the changed cost.  The default is the base problem's
    initial state, so with the anchor policy the base anchors seed both runs.
    """
    if x0 is None:
        return default_x0(pair.base)
    return initial_state(pair.base, x0)


def measured_sensitivity(pair: AdjacentPair, params, observations, x0=None) -> np.ndarray:
    """``||x(t) - x'(t)||_1`` for ``t = 1..T`` under shared broadcasts.

    Both replays start from :func:`shared_x0`.  Batch axes in
    ``observations`` carry through to the result.
    """
    y = _check_obs(pair, observations)
    x0 = shared_x0(pair, x0)
    xs = replay(pair.base, params, y, x0)
    xv = replay(pair.variant, params, y, x0)
    return np.abs(xs - xv).sum(axis=(-2, -1))[..., 1:]


def log_likelihood(problem, params, observations, x0=None) -> np.ndarray:
    """Log density of ``y(1..T)`` given the problem, summed over rounds.

    Rounds whose scale underflowed to zero are skipped.
    """
    y = np.asarray(observations, dtype=float)
    x = replay(problem, params, y, x0)
    T = y.shape[-3]
    _, scales = schedules(params, T, problem.constants.C2, problem.n)
    live = scales > 0
    resid = y[..., live, :, :] - x[..., :-1, :, :][..., live, :, :]
    dens = laplace_log_density(scales[live][:, None, None], resid)
    return np.sum(dens, axis=(-3, -2, -1))


@dataclass(frozen=True, eq=False)
class RatioSamples:
    """Per-trial log-likelihood ratios and their pointwise bounds.

    ``pointwise_bound`` is ``sum_t ||x(t-1) - x'(t-1)||_1 / M_t`` for the
    replayed pair; the log ratio can never exceed it.
    """

    log_ratio: np.ndarray
    pointwise_bound: np.ndarray
    budget: float
    lagged_budget: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.log_ratio)))


def dp_ratio_samples(pair: AdjacentPair, params, T, trials, seed, x0=None,
                     path=()) -> RatioSamples:
    """Sample broadcasts from the base problem and evaluate both likelihoods.

    Trial ``k`` uses ``RandomStream(seed, *path, k)``.  The log ratio is accumulated
    term by term, ``(|y - x'| - |y - x|) / M_t``, which equals
    ``log L - log L'`` without the cancellation of the normalising constants.
    """
    base, var = pair.base, pair.variant
    x0 = shared_x0(pair, x0)
    streams = [RandomStream(seed, *path, k) for k in range(trials)]
    res = run_batch(base, params, T, streams, x0=x0, record=True)
    y = res.observations
    xs = res.states
    xv = replay(var, params, y, x0)
    _, scales = schedules(params, T, base.constants.C2, base.n)
    live = scales > 0
    m = scales[live][:, None, None]
    ys = y[:, live]
    prev_s = xs[:, :-1][:, live]
    prev_v = xv[:, :-1][:, live]
    log_ratio = np.sum((np.abs(ys - prev_v) - np.abs(ys - prev_s)) / m, axis=(1, 2, 3))
    bound = np.sum(np.abs(prev_s - prev_v) / m, axis=(1, 2, 3))
    rep = budget(base.constants, base.n, params, T)
    return RatioSamples(log_ratio, bound, rep.finite_horizon_budget,
                        float(rep.lagged_partial_sums[-1]))


def dp_ratio_check(pair: AdjacentPair, params, T, trials, seed, x0=None) -> float:
    """Largest ``|log L - log L'|`` over ``trials`` sampled broadcast sequences."""
    return dp_ratio_samples(pair, params, T, trials, seed, x0).max_abs
