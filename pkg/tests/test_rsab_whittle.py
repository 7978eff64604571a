import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import always_active_value
from rmabsched.chain import DomainError
from rmabsched.rsab_whittle import (
    SubsidyProblem,
    crossing_time,
    indexability_scan,
    is_threshold_rule,
    extreme_ordering_check,
    q_values_numeric,
    solve_threshold,
    tau_special,
    threshold_numeric,
    v_star_closed,
    value_star_numeric,
    whittle_index_closed,
    whittle_index_numeric,
    whittle_index_uncorrected,
)

# (p01, beta, omega) -> index, frozen from the value-iteration oracle
FROZEN_INDEX = [
    (0.1, 0.5, 0.3, 0.236277749),
    (0.3, 0.9, 0.6, 0.32216926),
    (0.8, 0.9, 0.95, 0.863811567),
    (0.3, 0.5, 0.05, 0.028665932),
]


def test_tau_and_crossing_examples():
    assert tau_special(0.0, 2, 0.5) == 0.75
    assert tau_special(0.3, 0, 0.5) == 0.3
    assert crossing_time(0.0, 0.6, 0.5) == 2
    assert crossing_time(0.0, 0.75, 0.5) == 3  # landing exactly on the target is not above it
    assert crossing_time(0.7, 0.6, 0.5) == 0
    assert crossing_time(0.4, 0.4, 0.3) == 1
    assert crossing_time(0.2, 1.0, 0.3) == math.inf
    assert crossing_time(0.2, 0.5, 0.0) == math.inf
    assert crossing_time(0.2, 0.5, 1.0) == 1


@given(st.floats(0, 1), st.floats(0, 0.999), st.floats(0.001, 0.999))
def test_crossing_time_is_first_passage(w, target, p):
    L = crossing_time(w, target, p)
    assert tau_special(w, L, p) > target
    if L > 0:
        assert tau_special(w, L - 1, p) <= target


def test_subsidy_problem_domain():
    with pytest.raises(DomainError):
        SubsidyProblem(0.2, 1.0, 0.5)
    with pytest.raises(DomainError):
        SubsidyProblem(1.2, 0.5, 0.5)


@pytest.mark.parametrize("p, beta, w, expected", FROZEN_INDEX)
def test_whittle_frozen_values(p, beta, w, expected):
    assert whittle_index_closed(w, p, beta) == pytest.approx(expected, abs=1e-8)
    assert whittle_index_numeric(w, p, beta) == pytest.approx(expected, abs=1e-8)


def test_uncorrected_index_disagrees_with_oracle():
    # the faulty numerator misses the oracle badly and gives W(1) = 1/(1 - beta)
    assert whittle_index_uncorrected(0.3, 0.1, 0.5) == pytest.approx(0.5859, abs=1e-4)
    assert abs(whittle_index_uncorrected(0.3, 0.1, 0.5) - whittle_index_numeric(0.3, 0.1, 0.5)) > 0.3
    assert whittle_index_uncorrected(1.0, 0.3, 0.9) == pytest.approx(10.0)
    assert whittle_index_closed(1.0, 0.3, 0.9) == pytest.approx(1.0)


def test_whittle_endpoints():
    for p, beta in [(0.1, 0.5), (0.3, 0.9), (0.7, 0.2)]:
        assert whittle_index_closed(1.0, p, beta) == pytest.approx(1.0, abs=1e-12)
    # beta = 0 is the myopic index itself
    for w in np.linspace(0, 1, 11):
        assert whittle_index_closed(w, 0.4, 0.0) == pytest.approx(w, abs=1e-12)


def test_whittle_monotone_and_bounded():
    for p, beta in [(0.05, 0.95), (0.3, 0.9), (0.8, 0.5)]:
        w = np.linspace(0, 1, 401)
        W = np.array([whittle_index_closed(x, p, beta) for x in w])
        assert np.all(np.diff(W) >= -1e-12)
        assert W.min() >= -1e-12 and W.max() <= 1 + 1e-12


def test_closed_index_matches_oracle_on_random_points():
    rng = np.random.default_rng(17)
    for _ in range(30):
        p, beta, w = rng.uniform(0.05, 0.95), rng.uniform(0.1, 0.95), rng.random()
        assert whittle_index_closed(w, p, beta) == pytest.approx(whittle_index_numeric(w, p, beta), abs=1e-8)


def test_threshold_regimes():
    assert solve_threshold(SubsidyProblem(0.3, 0.9, -0.2)).regime == "always_active"
    res = solve_threshold(SubsidyProblem(0.3, 0.9, 1.0))
    assert res.regime == "always_passive" and res.omega_star == 1.0
    assert solve_threshold(SubsidyProblem(0.3, 0.0, 0.4)).omega_star == 0.4


def test_threshold_matches_numeric():
    rng = np.random.default_rng(2)
    for _ in range(25):
        pr = SubsidyProblem(rng.uniform(0.05, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0, 1))
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            res = solve_threshold(pr)
        assert res.method == "closed"
        assert res.omega_star == pytest.approx(threshold_numeric(pr), abs=1e-8)
        assert tau_special(0.0, res.L_star - 1, pr.p01) <= res.omega_star < res.upsilon_star


def test_v_star_closed_matches_value_iteration():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pr = SubsidyProblem(rng.uniform(0.05, 0.95), rng.uniform(0.1, 0.95), rng.uniform(-0.2, 1.2))
        for w in rng.random(5):
            assert v_star_closed(w, pr) == pytest.approx(value_star_numeric(w, pr), abs=1e-8)


def test_always_active_value_against_direct_sum():
    p, beta = 0.3, 0.8
    pr = SubsidyProblem(p, beta, -0.5)
    # from belief 0 the active arm earns the mean reward of the reset chain
    assert v_star_closed(0.0, pr) == pytest.approx(always_active_value(p, beta), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 0.95), st.floats(-0.2, 1.2))
def test_value_convex_in_belief(p, beta, m):
    pr = SubsidyProblem(p, beta, m)
    w = np.linspace(0, 1, 41)
    v = np.array([v_star_closed(x, pr) for x in w])
    assert np.all(np.diff(v, 2) >= -1e-9)
    assert np.all(np.diff(v) >= -1e-9)


def test_q_values_passive_identity():
    pr = SubsidyProblem(0.3, 0.9, 0.4)
    q0, q1 = q_values_numeric(0.5, pr)
    assert q0 == pytest.approx(0.4 + 0.9 * value_star_numeric(tau_special(0.5, 1, 0.3), pr), abs=1e-9)
    assert max(q0, q1) == pytest.approx(value_star_numeric(0.5, pr), abs=1e-12)


def test_indexability_scan_passes():
    for p, beta in [(0.05, 0.95), (0.5, 0.5), (0.9, 0.99)]:
        rep = indexability_scan(p, beta, m_grid=np.linspace(-0.1, 1.1, 25), step=0.05)
        assert rep.ok, rep.failures


def test_is_threshold_rule():
    assert is_threshold_rule(np.array([True, True, False]))
    assert is_threshold_rule(np.array([True, True]))
    assert is_threshold_rule(np.array([False, False]))
    assert not is_threshold_rule(np.array([False, True, False]))


def test_extreme_belief_orderings():
    rep = extreme_ordering_check(0.3, 0.9, [-0.3, 0.0, 0.4, 0.99, 1.0, 1.5])
    assert rep.ok, [r for r in rep.rows if not r[-1]]
    # the reversed ordering for m >= 1 never holds
    assert rep.rejected_rows and not any(r[-1] for r in rep.rejected_rows if "V(0|1)" in r[1])
