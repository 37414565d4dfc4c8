from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdurn.estimators import (
    Accumulators,
    allocation_proportion,
    empirical_proportion_mean,
    estimate_all,
    estimate_means,
    estimate_sample_size_moments,
    estimate_second_moments,
    estimate_variances_corr,
)
from mdurn.montecarlo import run_trajectory
from mdurn.urn import StepRecord

from support import constant_config, example_config


def trace():
    return [StepRecord(1, 2, 1, 2, 3, 0, 0), StepRecord(2, 1, 1, 4, 1, 0, 0)]


def test_update_by_hand():
    acc = Accumulators()
    acc.update(trace()[0])
    assert (acc.N_A, acc.N_B, acc.sum_AX, acc.sum_B_NX) == (1, 1, 2, 3)
    acc.update(trace()[1])
    assert (acc.N_A, acc.N_B, acc.sum_AX, acc.sum_B_NX) == (2, 1, 6, 3)


def test_update_requires_consecutive_steps():
    acc = Accumulators()
    with pytest.raises(ValueError):
        acc.update(StepRecord(2, 1, 1, 1, 1, 0, 0))


def test_pure_a_draw_leaves_b_count():
    acc = Accumulators.from_records(trace()[:1])
    acc.update(StepRecord(2, 3, 3, 5, 7, 0, 0))
    assert acc.N_B == 1 and acc.sum_B_NX == 3


def test_trace_estimates():
    acc = Accumulators.from_records(trace())
    assert estimate_means(acc) == (3.0, 3.0)
    assert estimate_second_moments(acc) == (10.0, 9.0, 6.0)
    v = estimate_variances_corr(acc)
    assert (v.var_a, v.var_b, v.rho) == (1.0, 0.0, None)
    assert estimate_sample_size_moments(acc) == (1.5, 2.5)
    assert empirical_proportion_mean(acc) == 0.75
    assert acc.sum_prop_exact == Fraction(3, 2)
    assert allocation_proportion(acc) == pytest.approx(2 / 3)


def test_undefined_estimates():
    acc = Accumulators.from_records([StepRecord(1, 2, 2, 3, 3, 0, 0)])
    m_a, m_b = estimate_means(acc)
    assert m_a == 3.0 and m_b is None
    assert estimate_second_moments(acc)[2] is None
    assert estimate_all(Accumulators()).M is None


def test_constant_reinforcement_estimates_are_exact():
    traj = run_trajectory(constant_config(3, 2, kappa=3, horizon=500, seed=4))
    e = estimate_all(traj.acc)
    assert (e.m_a, e.m_b, e.var_a, e.var_b) == (3.0, 2.0, 0.0, 0.0)
    assert e.q_ab == 6.0
    assert (e.mu_N, e.q_N) == (3.0, 9.0)


def records(draw):
    n = draw(st.integers(1, 40))
    out = []
    for i in range(n):
        N = draw(st.integers(1, 6))
        out.append(StepRecord(i + 1, N, draw(st.integers(0, N)), draw(st.integers(1, 30)),
                              draw(st.integers(1, 30)), 0, 0))
    return out


@settings(max_examples=300, deadline=None)
@given(st.composite(records)())
def test_accumulator_invariants(recs):
    acc = Accumulators.from_records(recs)
    assert acc.N_A + acc.N_B == acc.sum_N
    assert acc.sum_AX >= acc.N_A and acc.sum_B_NX >= acc.N_B
    v = estimate_variances_corr(acc)
    for var in (v.var_a, v.var_b):
        assert var is None or var >= 0.0
    if v.rho is not None:
        assert -1.0 <= v.rho <= 1.0
    exact = sum(Fraction(r.X, r.N) for r in recs)
    assert acc.sum_prop_exact == exact
    assert acc.sum_prop == float(exact)
    a = np.array([r.A for r in recs], dtype=float)
    x = np.array([r.X for r in recs], dtype=float)
    if x.sum() > 0:
        m = (a * x).sum() / x.sum()
        assert v.var_a == pytest.approx(((a - m) ** 2 * x).sum() / x.sum(), rel=1e-9, abs=1e-9)


def test_accumulator_equality_ignores_empty_sizes():
    a = Accumulators.from_records(trace())
    b = Accumulators.from_records(trace())
    b.x_by_size[7] = 0
    assert a == b


def test_example_run_estimates_near_truth():
    traj = run_trajectory(example_config(horizon=20_000, seed=3))
    e = estimate_all(traj.acc)
    assert abs(e.var_a - 528 / 225) < 0.15
    assert abs(e.mu_N - 3.0) < 0.05
    assert abs(e.q_N - 11.0) < 0.2
