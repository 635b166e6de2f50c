"""Structured reports behind the ``verify``, ``tune`` and ``bounds`` commands."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .graphs import certify_eta, envelope
from .privacy import budget, dp_ratio_samples, measured_sensitivity, sensitivity_bound
from .engine import run_batch
from .problem import make_adjacent
from .rng import RandomStream
from .tuning import (accuracy_bound, accuracy_d, envelope_constants, solve_c_star,
                     solve_p_star, solve_p_star_numeric, tune_multistart)

_PAIR_STREAM = 20
_OBS_STREAM = 21
_LIVE_STREAM = 22
_RATIO_STREAM = 23


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class VerifyReport:
    checks: list
    budget_rows: list
    sensitivity_rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def random_pairs(problem, count, seed):
    """Adjacent pairs changing a random agent to a fresh uniform anchor."""
    dom = problem.domain
    pairs = []
    for k in range(count):
        s = RandomStream(seed, _PAIR_STREAM, k)
        agent = min(int(s.uniform() * problem.N), problem.N - 1)
        anchor = dom.lower + (dom.upper - dom.lower) * s.uniforms(problem.n)
        pairs.append(make_adjacent(problem, agent, anchor))
    return pairs


def verify_report(config: ExperimentConfig) -> VerifyReport:
    problem = config.build_problem()
    x0 = config.initial_state(problem)
    params = config.base_params()
    vs = config.verify
    T = vs.rounds
    C, n = problem.constants, problem.n

    rep = budget(C, n, params, T)
    closed_err = abs(rep.infinite_sum - params.epsilon)
    checks = [Check(
        "budget",
        rep.passed and closed_err <= 1e-12 * max(1.0, params.epsilon),
        f"infinite sum {rep.infinite_sum:.15g} vs epsilon {params.epsilon:g}; "
        f"{T}-round partial sum {rep.finite_horizon_budget:.12g}",
    )]

    delta = sensitivity_bound(C, n, params, T).per_round
    pairs = random_pairs(problem, vs.pairs, config.seed)
    sens_rows, worst = [], -np.inf
    for k, pair in enumerate(pairs):
        live = run_batch(problem, params, T,
                         [RandomStream(config.seed, _LIVE_STREAM, k, j) for j in range(vs.sequences)],
                         x0=x0, record=True).observations
        rand = -3.0 + 6.0 * RandomStream(config.seed, _OBS_STREAM, k).uniforms(
            (vs.sequences, T, problem.N, n))
        meas = measured_sensitivity(pair, params, np.concatenate([live, rand]), x0).max(axis=0)
        worst = max(worst, float(np.max(meas - delta)))
        sens_rows += [(k, t + 1, float(meas[t]), float(delta[t])) for t in range(T)]
    checks.append(Check("sensitivity", worst <= 1e-9,
                        f"max(measured - bound) = {worst:.3e} over {vs.pairs} pairs"))

    ratio_max, lag_ok = 0.0, True
    for k, pair in enumerate(pairs):
        s = dp_ratio_samples(pair, params, T, vs.trials, config.seed, x0,
                             path=(_RATIO_STREAM, k))
        ratio_max = max(ratio_max, s.max_abs)
        lag_ok &= bool(np.all(np.abs(s.log_ratio) <= s.pointwise_bound + 1e-9))
    checks.append(Check("dp-ratio", ratio_max <= params.epsilon + 1e-6,
                        f"max |log L - log L'| = {ratio_max:.6g} vs epsilon {params.epsilon:g} "
                        f"({vs.trials} trials x {vs.pairs} pairs)"))
    checks.append(Check("pointwise-bound", lag_ok,
                        "every log ratio within sum_t ||x(t-1) - x'(t-1)||_1 / M_t"))
    return VerifyReport(checks, list(rep.rows()), sens_rows)


def grid_gap_c(C, n, eps, q, p, c_star, hi=None, step=1e-5):
    """``d(c*) - min_grid d``; non-positive means the solver beat the grid."""
    hi = hi if hi is not None else max(5.0, 2 * c_star)
    grid = np.arange(step, hi + step / 2, step)
    return float(accuracy_d(C, n, eps, c_star, q, p) - accuracy_d(C, n, eps, grid, q, p).min())


def grid_gap_q(C, n, eps, c, p, q_star, step=1e-3):
    grid = np.arange(0.01, p - 0.01 + step / 2, step)
    grid = grid[grid < p]
    if grid.size == 0:
        return float("-inf")
    return float(accuracy_d(C, n, eps, c, q_star, p) - accuracy_d(C, n, eps, c, grid, p).min())


def tune_report(config: ExperimentConfig):
    problem = config.build_problem()
    C, n = problem.constants, problem.n
    rows = []
    for eps in config.epsilons:
        r = tune_multistart(C, n, eps, starts=config.tuning_starts, seed=config.seed,
                            passes=config.tuning_passes,
                            initial=config.base_params().replace(epsilon=eps))
        pr = r.params
        b = accuracy_bound(C, n, pr)
        c_solo = solve_c_star(C, n, eps, pr.q, pr.p)
        rows.append({
            "epsilon": eps, "c": pr.c, "q": pr.q, "p": pr.p, "d": b.d,
            "term_init": b.term_init, "term_step": b.term_step, "term_noise": b.term_noise,
            "c_grid_gap": grid_gap_c(C, n, eps, pr.q, pr.p, c_solo),
            "q_grid_gap": grid_gap_q(C, n, eps, pr.c, pr.p, pr.q),
            "p_root_gap": abs(solve_p_star(pr.q) - solve_p_star_numeric(pr.q)),
            "passes": r.iterations, "converged": r.converged,
        })
    return rows


def bounds_report(config: ExperimentConfig, params, horizon=1000):
    problem = config.build_problem()
    C, n, N = problem.constants, problem.n, problem.N
    b = accuracy_bound(C, n, params)
    eta = certify_eta(problem.graph, horizon)
    env = envelope(N, eta)
    M1, M2, M3 = envelope_constants(env, C, N, problem.domain.max_norm)
    rep = budget(C, n, params, 1)
    return {
        "params": params.as_dict(),
        "C1": C.C1, "C2": C.C2, "C3": C.C3, "n": n, "N": N,
        "term_init": b.term_init, "term_step": b.term_step, "term_noise": b.term_noise,
        "d": b.d, "d_conservative": b.d_conservative,
        "eta": eta, "theta": env.theta, "beta": env.beta, "M1": M1, "M2": M2, "M3": M3,
        "budget_infinite_sum": rep.infinite_sum, "budget_lagged_sum": rep.lagged_infinite_sum,
        "sensitivity_round1": float(sensitivity_bound(C, n, params, 1).per_round[0]),
    }
