import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpdopt.core import BoxDomain
from dpdopt.engine import ScheduleParams, pairwise_disagreement, run_batch
from dpdopt.errors import ParameterError
from dpdopt.graphs import GraphSchedule, certify_eta, envelope
from dpdopt.problem import CostConstants, make_rendezvous
from dpdopt.reports import grid_gap_c, grid_gap_q
from dpdopt.rng import RandomStream
from dpdopt.tuning import (accuracy_bound, accuracy_d, c_residual, convergence_bound,
                           convergence_bound_series, envelope_constants, p_residual,
                           q_derivative, random_initial, solve_c_star, solve_p_star,
                           solve_p_star_numeric, solve_q_star, tune, tune_multistart)

C = CostConstants.for_quadratics(BoxDomain.cube(2))
UNIT = CostConstants(1.0, 1.0, 1.0)
CANON = ScheduleParams(1.0, 0.1, 0.5, 0.8)
EPSILONS = (0.1, 0.2, 0.5, 1, 2, 5, 10)


def test_accuracy_bound_example():
    b = accuracy_bound(C, 2, CANON)
    assert b.term_init == pytest.approx(2 * math.sqrt(2) * math.exp(-0.4), abs=1e-12)
    assert b.term_init == pytest.approx(1.895951, abs=1e-6)
    assert b.term_step == pytest.approx(0.426667, abs=1e-6)
    assert b.term_noise == pytest.approx(101.1358, abs=1e-3)
    assert b.d == b.term_init + b.term_step + b.term_noise
    assert b.d_conservative == pytest.approx(b.d + b.term_init)


def test_accuracy_bound_oracle_script():
    # independent evaluation with plain floats
    c, q, p, e, n = 0.1, 0.5, 0.8, 1.0, 2
    C1, C2, C3 = 2 * 2**0.5, 4 * 2**0.5, 2.0
    d = (C1 * math.exp(-C3 * c / (1 - q)) + C2**2 * c**2 / (1 - q**2)
         + 8 * C2**2 * n * c**2 * p**2 / (e**2 * (p - q) ** 2 * (1 - p**2)))
    assert accuracy_bound(C, 2, CANON).d == pytest.approx(d, rel=1e-14)


def test_noise_term_scaling():
    ref = accuracy_bound(C, 2, CANON).term_noise
    for eps in EPSILONS:
        b = accuracy_bound(C, 2, CANON.replace(epsilon=eps))
        assert b.term_noise * eps**2 == pytest.approx(ref, rel=1e-12)
    big = accuracy_bound(C, 2, CANON.replace(epsilon=1e8))
    assert big.d == pytest.approx(big.term_init + big.term_step, rel=1e-12)
    half = accuracy_bound(C, 2, CANON.replace(epsilon=2.0)).term_noise
    assert half == pytest.approx(ref / 4, rel=1e-14)


@settings(max_examples=100)
@given(st.floats(0.05, 20), st.floats(1e-3, 2), st.floats(0.01, 0.9), st.floats(0.01, 0.99))
def test_accuracy_terms_positive(eps, c, q, frac):
    p = q + (1 - q) * frac
    if not q < p < 1:
        return
    b = accuracy_bound(C, 2, ScheduleParams(eps, c, q, p))
    assert b.term_init > 0 and b.term_step > 0 and b.term_noise > 0


def _dd_dc(c, q, p, eps=1.0, Cst=C, n=2):
    h = 1e-4 * c
    return (accuracy_d(Cst, n, eps, c + h, q, p) - accuracy_d(Cst, n, eps, c - h, q, p)) / (2 * h)


# the finite-difference floor is about eps_machine * d / h, so tiny c* gets a looser tolerance
@pytest.mark.parametrize("q, p, eps, tol", [(0.5, 0.8, 1.0, 1e-8), (0.2, 0.5, 0.1, 1e-6),
                                            (0.7, 0.9, 10.0, 1e-8)])
def test_c_star_stationary_and_minimal(q, p, eps, tol):
    c = solve_c_star(C, 2, eps, q, p)
    assert abs(c_residual(C, 2, eps, c, q, p)) < 1e-10
    assert abs(_dd_dc(c, q, p, eps)) < tol
    d = accuracy_d(C, 2, eps, c, q, p)
    assert d <= accuracy_d(C, 2, eps, c * 1.1, q, p)
    assert d <= accuracy_d(C, 2, eps, c / 1.1, q, p)


def test_c_star_matches_grid():
    c = solve_c_star(UNIT, 1, 1.0, 0.5, 0.8)
    grid = np.arange(1e-5, 5 + 5e-6, 1e-5)
    best = grid[np.argmin(accuracy_d(UNIT, 1, 1.0, grid, 0.5, 0.8))]
    assert abs(c - best) < 1e-4
    assert grid_gap_c(UNIT, 1, 1.0, 0.5, 0.8, c) <= 1e-12


def test_c_residual_monotone():
    cs = np.geomspace(1e-6, 10, 200)
    r = c_residual(C, 2, 1.0, cs, 0.5, 0.8)
    assert np.all(np.diff(r) < 0)
    assert r[0] > 0


@pytest.mark.parametrize("c, p, eps", [(0.1, 0.8, 1.0), (0.5, 0.95, 5.0), (0.05, 0.6, 10.0),
                                       (0.3, 0.9, 0.5)])
def test_q_star_beats_grid(c, p, eps):
    sol = solve_q_star(C, 2, eps, c, p)
    assert 0 < sol.q < p
    if sol.interior:
        scale = abs(q_derivative(C, 2, eps, c, 0.5 * p, p)) + 1.0
        assert abs(q_derivative(C, 2, eps, c, sol.q, p)) <= 1e-10 * scale
    assert grid_gap_q(C, 2, eps, c, p, sol.q) <= 1e-6


def test_q_derivative_matches_finite_difference():
    for q in (0.1, 0.4, 0.7):
        h = 1e-7
        fd = (accuracy_d(C, 2, 1.0, 0.1, q + h, 0.8) - accuracy_d(C, 2, 1.0, 0.1, q - h, 0.8)) / (2 * h)
        assert q_derivative(C, 2, 1.0, 0.1, q, 0.8) == pytest.approx(fd, rel=1e-5)


def test_q_star_rejects_tiny_p():
    with pytest.raises(ParameterError):
        solve_q_star(C, 2, 1.0, 0.1, 1e-6)


@pytest.mark.parametrize("q, expected", [(0.125, 0.5), (0.5, 0.7937005)])
def test_p_star_examples(q, expected):
    p = solve_p_star(q)
    assert p == pytest.approx(expected, abs=1e-7)
    assert abs(p_residual(q, p)) < 1e-12


@given(st.floats(1e-6, 1 - 1e-6))
def test_p_star_properties(q):
    p = solve_p_star(q)
    assert q < p < 1
    assert abs(p - solve_p_star_numeric(q)) < 1e-9


def test_p_star_rejects():
    with pytest.raises(ParameterError):
        solve_p_star(1.0)


def test_tune_descent_and_consistency():
    r = tune(C, 2, 1.0, CANON, passes=1)
    assert r.d_achieved <= accuracy_bound(C, 2, CANON).d
    r = tune(C, 2, 1.0, CANON)
    assert all(b <= a for a, b in zip(r.history, r.history[1:]))
    assert r.d_achieved == pytest.approx(accuracy_bound(C, 2, r.params).d, rel=1e-14)
    assert r.converged


def test_tune_rejects_zero_passes():
    with pytest.raises(ParameterError):
        tune(C, 2, 1.0, CANON, passes=0)


def test_multistart_reports_smallest():
    runs = [tune(C, 2, 1.0, random_initial(1.0, RandomStream(0, k))) for k in range(10)]
    best = tune_multistart(C, 2, 1.0, starts=10, seed=0)
    assert best.d_achieved == min(r.d_achieved for r in runs)
    ds = np.array([r.d_achieved for r in runs])
    assert np.all(ds <= 1.05 * ds.min()) or best.d_achieved == ds.min()


def test_tuned_d_decreases_with_epsilon():
    ds = [tune_multistart(C, 2, e, initial=CANON.replace(epsilon=e)).d_achieved for e in EPSILONS]
    assert all(b <= a for a, b in zip(ds, ds[1:]))


def test_convergence_bound_example():
    env = envelope(2, 1.0)
    params = ScheduleParams(1.0, 0.5, 0.5, 0.8)
    sup = math.sqrt(2)
    M1, M2, M3 = envelope_constants(env, UNIT, 2, sup)
    assert M1 == pytest.approx(4 * env.theta * sup)
    assert M2 == pytest.approx(4 * env.theta) and M3 == pytest.approx(4 * env.theta)
    got = convergence_bound(env, UNIT, 2, params, np.zeros(5), 1, sup)
    assert got == pytest.approx(M1 * 0.9375 + M2 * 0.5)
    assert convergence_bound(env, UNIT, 2, params, np.zeros(5), 0, sup) == M1
    with pytest.raises(ParameterError):
        convergence_bound(env, UNIT, 2, params, np.zeros(5), 6, sup)


def test_convergence_bound_matches_direct_sums():
    env = envelope(3, 0.3)
    params = ScheduleParams(1.0, 0.2, 0.6, 0.9)
    noise = RandomStream(4).uniforms(40)
    M1, M2, M3 = envelope_constants(env, C, 3, 1.0)
    series = convergence_bound_series(env, M1, M2, M3, params, noise)
    b = env.beta
    for t in (1, 7, 40):
        s = np.arange(1, t + 1)
        direct = (M1 * b**t + M2 * np.sum(b ** (t - s) * params.c * params.q ** (s - 1))
                  + M3 * np.sum(b ** (t - s + 1) * noise[:t]))
        assert series[t - 1] == pytest.approx(direct, rel=1e-12)


def test_convergence_bound_vanishes_without_noise():
    env = envelope(2, 1.0)
    params = ScheduleParams(1.0, 0.5, 0.5, 0.8)
    assert convergence_bound(env, UNIT, 2, params, np.zeros(3000), 3000, 1.0) < 1e-6


def test_convergence_bound_dominates_simulation():
    prob = make_rendezvous(N=4, seed=5, graph=GraphSchedule("random-connected", 4, seed=2))
    T = 200
    env = envelope(4, certify_eta(prob.graph, T))
    res = run_batch(prob, CANON, T, [RandomStream(8, k) for k in range(20)], record=True)
    M = envelope_constants(env, prob.constants, 4, prob.domain.max_norm)
    for b in range(20):
        bound = convergence_bound_series(env, *M, CANON, res.noise_norms[b])
        meas = pairwise_disagreement(res.states[b, 1:])
        assert np.all(meas <= bound)
