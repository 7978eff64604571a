import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmabsched.chain import (
    BeliefVec,
    ChainC1,
    ChainGeneral,
    DomainError,
    SystemConfig,
    belief_matrix,
    belief_update_scheduled_c1,
    study_chain,
    geometric_sum,
    posterior_after_activation,
    propagate_passive_vec,
    tau0_1,
    tau0_k,
    validate_assumptions,
)

probs = st.floats(0.0, 1.0)


def ordered_chain(draw4):
    a, b, c, d = sorted(draw4)
    return ChainC1(p01_passive=c, p11_passive=d, p01_active=b, p11_active=a)


def test_validate_accepts_ordered_chain(ref_chain):
    rep = validate_assumptions(ref_chain, 4, 2)
    assert rep.ok and rep.m_ratio == 2.0 and rep.offending == ()


def test_validate_names_offending_inequality():
    ch = ChainC1(p01_passive=0.9, p11_passive=0.2, p01_active=0.1, p11_active=0.05)
    rep = validate_assumptions(ch, 4, 2)
    assert not rep.ordering_holds
    assert any("p01_passive" in s and "p11_passive" in s for s in rep.offending)


def test_validate_flags_non_integer_ratio(ref_chain):
    rep = validate_assumptions(ref_chain, 5, 2)
    assert not rep.integer_ratio_holds and rep.ordering_holds
    assert rep.m_ratio == 2.5


def test_chain_rejects_bad_probability():
    with pytest.raises(DomainError):
        ChainC1(1.2, 0.5, 0.1, 0.0)


def test_tau0_examples(ref_chain):
    assert tau0_1(0.0, ref_chain) == pytest.approx(0.2)
    # 0 -> 0.2 -> 0.2 * 0.6 + 0.2
    assert tau0_k(0.0, 2, ref_chain) == pytest.approx(0.32, abs=1e-15)
    assert tau0_k(0.37, 0, ref_chain) == 0.37
    with pytest.raises(DomainError):
        tau0_1(1.5, ref_chain)


def test_tau0_unit_slope_limit():
    ch = ChainC1(p01_passive=0.0, p11_passive=1.0, p01_active=0.0, p11_active=0.0)
    assert tau0_k(0.3, 7, ch) == pytest.approx(0.3)
    assert geometric_sum(1.0, 5) == 5.0


@given(st.lists(probs, min_size=4, max_size=4), probs, st.integers(0, 30))
def test_tau0_k_matches_iteration(ps, omega, k):
    ch = ordered_chain(ps)
    w = omega
    for _ in range(k):
        w = tau0_1(w, ch)
    assert tau0_k(omega, k, ch) == pytest.approx(w, abs=1e-12)
    assert -1e-12 <= tau0_k(omega, k, ch) <= 1 + 1e-12


@given(st.lists(probs, min_size=4, max_size=4), probs, probs)
def test_tau0_monotone_under_ordering(ps, a, b):
    ch = ordered_chain(ps)
    lo, hi = min(a, b), max(a, b)
    assert tau0_1(lo, ch) <= tau0_1(hi, ch) + 1e-15


def test_scheduled_update(ref_chain):
    out = dict(belief_update_scheduled_c1(0.3, ref_chain))
    assert out == {0.05: 0.3, 0.1: pytest.approx(0.7)}
    assert belief_update_scheduled_c1(1.0, ref_chain) == ((0.05, 1.0),)
    assert belief_update_scheduled_c1(0.0, ref_chain) == ((0.1, 1.0),)


@given(st.lists(probs, min_size=4, max_size=4), probs)
def test_scheduled_update_is_distribution(ps, omega):
    ch = ordered_chain(ps)
    out = belief_update_scheduled_c1(omega, ch)
    assert sum(p for _, p in out) == pytest.approx(1.0, abs=1e-15)
    # its mean is the active one-step propagation
    mean = sum(w * p for w, p in out)
    assert mean == pytest.approx(omega * ch.delta1 + ch.p01_active, abs=1e-12)


def test_beliefvec_validation():
    with pytest.raises(DomainError):
        BeliefVec([0.5, 0.6])
    with pytest.raises(DomainError):
        BeliefVec([1.1, -0.1])
    b = BeliefVec([0.25, 0.75])
    assert b.capacity == 1 and b.p_empty == 0.25
    assert BeliefVec.uniform(3) == BeliefVec([0.25] * 4)
    with pytest.raises(ValueError):
        b.probs[0] = 0.0


def test_general_chain_validation():
    with pytest.raises(DomainError):
        ChainGeneral(2, np.eye(3) * 0.5, np.eye(3))
    bad = np.array([[0.5, 0.0, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(DomainError, match="tridiagonal"):
        ChainGeneral(2, bad, np.eye(3))


def test_study_chain_rows():
    ch = study_chain(2)
    assert ch.P_passive.tolist()[0] == pytest.approx([0.85, 0.15, 0.0])
    assert ch.P_passive.tolist()[1] == pytest.approx([0.05, 0.85, 0.1])
    assert ch.P_passive.tolist()[2] == pytest.approx([0.0, 0.1, 0.9])
    assert ch.P_active.tolist()[1] == pytest.approx([0.95, 0.05, 0.0])
    assert ch.P_active.tolist()[2] == pytest.approx([0.0, 0.95, 0.05])
    # capacity one version satisfies the ordering assumption
    assert study_chain(1).to_c1().satisfies_assumptions


def test_propagate_examples():
    ch = study_chain(2)
    out = propagate_passive_vec(BeliefVec.point(2, 0), ch)
    assert out.probs.tolist() == pytest.approx([0.85, 0.15, 0.0])
    with pytest.raises(DomainError):
        propagate_passive_vec(BeliefVec.uniform(3), ch)


@given(st.integers(1, 6), st.lists(st.floats(0.01, 1.0), min_size=7, max_size=7))
def test_propagate_stays_on_simplex(C, raw):
    ch = study_chain(C)
    v = np.array(raw[: C + 1])
    out = propagate_passive_vec(BeliefVec(v / v.sum()), ch)
    assert out.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(out.probs >= 0)


def test_posterior_after_activation():
    ch = study_chain(3)
    assert posterior_after_activation(2, ch).probs.tolist() == pytest.approx([0.0, 0.95, 0.05, 0.0])
    with pytest.raises(IndexError):
        posterior_after_activation(4, ch)


def test_system_config():
    with pytest.raises(DomainError):
        SystemConfig(M=2, K=3)
    with pytest.raises(DomainError):
        SystemConfig(M=4, K=2, beta=1.0, horizon=None)
    with pytest.warns(UserWarning):
        s = SystemConfig(M=5, K=2, beta=0.9)
    assert not s.integer_ratio
    s = SystemConfig(M=2, K=1, beta=0.9, initial_beliefs=(0.2, 0.7))
    assert s.scalar_beliefs() == (0.2, 0.7)
    assert np.allclose(belief_matrix(s.initial_beliefs, 1), [[0.8, 0.2], [0.3, 0.7]])
    s2 = SystemConfig(M=2, K=1, C=2, beta=0.9, initial_beliefs=(BeliefVec.uniform(2),) * 2)
    assert s2.scalar_beliefs()[0] == pytest.approx(2 / 3)
