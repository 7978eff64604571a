"""One-arm restless bandit with a subsidy for passivity.

Specialised chain: a scheduled queue is always emptied by the server
(``p11_active = 0``), an unscheduled full queue stays full
(``p11_passive = 1``) and an empty queue receives a task w.p. ``p01``
under either action. Under this chain the belief of a passive arm climbs
``omega -> 1 - (1 - p01)(1 - omega)`` and activation resets it to 0 or
``p01``. Everything reachable from the reset points therefore lies on the
single orbit ``0, p01, tau(p01), ...`` which makes value iteration exact up
to truncation; that solver is the numeric oracle for the closed forms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .chain import DomainError, check_belief

TRUNC_TOL = 1e-12
VI_TOL = 1e-12
VI_MAX_ITER = 10**6
BISECT_TOL = 1e-9
PASSIVE_TOL = 1e-10


@dataclass(frozen=True)
class SubsidyProblem:
    p01: float
    beta: float
    m: float

    def __post_init__(self):
        p = float(self.p01)
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"p01={p} is not a probability")
        b = float(self.beta)
        if not 0.0 <= b < 1.0:
            raise DomainError(f"beta={b} must lie in [0, 1)")
        object.__setattr__(self, "p01", p)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "m", float(self.m))


@dataclass(frozen=True)
class ThresholdResult:
    """Activate iff ``omega > omega_star``.

    ``L_star`` is the number of passive slots a belief reset to 0 needs to
    climb above the threshold, ``upsilon_star`` the belief it reaches then.
    ``method`` records whether the closed form or the numeric fallback
    produced the threshold.
    """

    omega_star: float
    L_star: float
    upsilon_star: float
    regime: str
    method: str = "closed"


def tau_special(omega: float, k: int, p01: float) -> float:
    """Belief after ``k`` passive slots: ``1 - (1 - p01)**k (1 - omega)``."""
    omega = check_belief(omega)
    if k < 0:
        raise DomainError(f"k={k} must be nonnegative")
    if k == 0:
        return omega
    return 1.0 - (1.0 - p01) ** k * (1.0 - omega)


def crossing_time(omega: float, omega_prime: float, p01: float):
    """Passive slots until the belief started at ``omega`` exceeds ``omega_prime``.

    0 if it already does, ``math.inf`` if it never will (``omega_prime >= 1``
    or ``p01 = 0``). A belief sitting exactly on ``omega_prime`` counts as not
    above it, so ``crossing_time(w, w, p01) == 1``.
    """
    omega = check_belief(omega)
    if omega > omega_prime:
        return 0
    if omega_prime >= 1.0:
        return math.inf
    if p01 <= 0.0:
        # the belief is frozen below omega_prime
        return math.inf
    if p01 >= 1.0:
        return 1
    L = math.floor(math.log((1.0 - omega_prime) / (1.0 - omega)) / math.log(1.0 - p01)) + 1
    L = max(L, 1)
    # the logarithm can be off by one near exact hits; settle it on the orbit itself
    while L > 1 and tau_special(omega, L - 1, p01) > omega_prime:
        L -= 1
    while tau_special(omega, L, p01) <= omega_prime:
        L += 1
    return L


# --------------------------------------------------------------------------
# numeric oracle: value iteration on the orbit of 0
# --------------------------------------------------------------------------


def _orbit(start: float, p01: float, beta: float) -> np.ndarray:
    """``start, tau(start), ...`` up to the first index ``k`` with
    ``beta**k < 1e-12`` or ``1 - tau^k(start) < 1e-12``."""
    pts = [start]
    x, disc = start, 1.0
    while disc >= TRUNC_TOL and 1.0 - x >= TRUNC_TOL:
        x = x * (1.0 - p01) + p01
        disc *= beta
        pts.append(x)
    return np.array(pts)


@lru_cache(maxsize=64)
def _base_grid(p01: float, beta: float):
    states = _orbit(0.0, p01, beta)
    if states.size < 2:  # pragma: no cover - the orbit always has a second point
        states = np.array([0.0, p01])
    n = states.size
    nxt = np.minimum(np.arange(1, n + 1), n - 1).astype(np.int64)
    states.setflags(write=False)
    nxt.setflags(write=False)
    return states, nxt


@lru_cache(maxsize=4096)
def _solve_base(p01: float, beta: float, m: float):
    states, nxt = _base_grid(p01, beta)
    v, _ = kernels.subsidy_value_iteration(states, nxt, 0, 1, m, beta, VI_TOL, VI_MAX_ITER)
    v = np.asarray(v)
    v.setflags(write=False)
    return v


def _active_q(omegas, v_empty, v_arrival, beta):
    return omegas + beta * (omegas * v_empty + (1.0 - omegas) * v_arrival)


def _q_values(omegas, problem: SubsidyProblem):
    """``(V(omega|0), V(omega|1))`` for an array of beliefs.

    The value on each query orbit is rolled back from its truncation point,
    given the converged values at the two reset beliefs.
    """
    p, beta, m = problem.p01, problem.beta, problem.m
    v = _solve_base(p, beta, m)
    v_empty, v_arrival = v[0], v[1]
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    q0 = np.empty_like(omegas)
    q1 = _active_q(omegas, v_empty, v_arrival, beta)
    for idx, w in enumerate(omegas):
        orbit = _orbit(float(w), p, beta)
        act = _active_q(orbit, v_empty, v_arrival, beta)
        # fixed point of V = max(m + beta V, act) at the truncation point
        val = max(m / (1.0 - beta), act[-1])
        for k in range(orbit.size - 2, -1, -1):
            passive = m + beta * val
            if k == 0:
                q0[idx] = passive
            val = passive if passive >= act[k] else act[k]
        if orbit.size == 1:
            q0[idx] = m + beta * val
    return q0, q1


def q_values_numeric(omega: float, problem: SubsidyProblem) -> tuple:
    """Numeric ``(V_m(omega|0), V_m(omega|1))``."""
    q0, q1 = _q_values([check_belief(omega)], problem)
    return float(q0[0]), float(q1[0])


def value_star_numeric(omega: float, problem: SubsidyProblem) -> float:
    """Optimal value ``V_m*(omega)`` by value iteration on the reachable orbit."""
    q0, q1 = q_values_numeric(omega, problem)
    return max(q0, q1)


def passive_mask(omegas, problem: SubsidyProblem, tol: float = PASSIVE_TOL) -> np.ndarray:
    """Boolean mask of beliefs at which passivity is optimal (ties go passive)."""
    q0, q1 = _q_values(omegas, problem)
    return q0 >= q1 - tol


def threshold_numeric(problem: SubsidyProblem, tol: float = 1e-13) -> float:
    """Largest belief at which passivity is still optimal, by bisection on the gap."""
    m = problem.m
    if m < 0:
        return -math.inf
    if m >= 1:
        return 1.0

    def gap(w):
        q0, q1 = q_values_numeric(w, problem)
        return q0 - q1

    if gap(1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def _orbit_length(p01: float, beta: float) -> int:
    return _base_grid(p01, beta)[0].size - 1


def _reset_values(m: float, beta: float, L, upsilon: float) -> tuple:
    """``(V*(0), V*(p01))`` when a belief reset to 0 stays passive ``L`` slots.

    From 0 the arm collects ``m`` for ``L`` slots and is activated at
    ``upsilon``; activation sends it back to 0 or to ``p01`` and
    ``V*(0) = m + beta V*(p01)`` closes the two-unknown linear system.
    """
    s = 0.0 if L == math.inf else beta**L
    A = (m * (1.0 - s) / (1.0 - beta) + s * (upsilon - (1.0 - upsilon) * m)) / (
        1.0 - s * (1.0 - upsilon * (1.0 - beta))
    )
    B = (A - m) / beta
    return A, B


def _indifference_point(m: float, p01: float, beta: float, A: float, B: float) -> float:
    # m + beta V(tau(w)|1) = V(w|1) with V(x|1) = beta B + x (1 + beta A - beta B)
    D = 1.0 + beta * A - beta * B
    return (m + beta * p01 * D - beta * (1.0 - beta) * B) / (D * (1.0 - beta * (1.0 - p01)))


def solve_threshold(problem: SubsidyProblem) -> ThresholdResult:
    """Optimal threshold via the self-consistent crossing-time search."""
    p, beta, m = problem.p01, problem.beta, problem.m
    if m < 0:
        return ThresholdResult(-math.inf, 0, 0.0, "always_active")
    if m >= 1:
        return ThresholdResult(1.0, math.inf, 1.0, "always_passive")
    if beta == 0.0 or p == 0.0:
        # no look-ahead, or a frozen belief: indifference at omega = m
        L = crossing_time(0.0, m, p)
        ups = 1.0 if L == math.inf else tau_special(0.0, L, p)
        return ThresholdResult(m, L, ups, "interior")
    L_max = _orbit_length(p, beta)
    for L in range(1, L_max + 1):
        ups = tau_special(0.0, L, p)
        A, B = _reset_values(m, beta, L, ups)
        w = _indifference_point(m, p, beta, A, B)
        lower = tau_special(0.0, L - 1, p)
        # at m ~ 0 the indifference point sits on 0 up to rounding
        if lower - 1e-12 <= w < ups:
            return ThresholdResult(max(w, lower), L, ups, "interior")
    # the reset belief never crosses: a pure subsidy stream from 0
    A, B = _reset_values(m, beta, math.inf, 1.0)
    w = _indifference_point(m, p, beta, A, B)
    if w >= tau_special(0.0, L_max, p):
        return ThresholdResult(w, crossing_time(0.0, w, p), 1.0, "interior")
    warnings.warn(
        f"no self-consistent crossing time for p01={p}, beta={beta}, m={m}; "
        "using the numeric threshold",
        RuntimeWarning,
        stacklevel=2,
    )
    w = threshold_numeric(problem)
    L = crossing_time(0.0, w, p)
    ups = 1.0 if L == math.inf else tau_special(0.0, L, p)
    return ThresholdResult(w, L, ups, "interior", method="numeric")


def v_star_closed(omega: float, problem: SubsidyProblem, threshold: ThresholdResult = None) -> float:
    """Closed-form ``V_m*(omega)``.

    Passive below the threshold for ``L(omega, omega*)`` slots, then one
    activation; above it, ``V(omega|1)`` directly.
    """
    omega = check_belief(omega)
    p, beta, m = problem.p01, problem.beta, problem.m
    if threshold is None:
        threshold = solve_threshold(problem)
    if threshold.regime == "always_passive":
        return m / (1.0 - beta)
    if threshold.regime == "always_active":
        # alternate resets between 0 and p01 forever
        denom = 1.0 - beta * (1.0 - p) - beta * beta * p
        B = p / denom
        A = beta * B
        return omega + beta * (omega * A + (1.0 - omega) * B)
    if threshold.regime != "interior":
        raise DomainError(f"unknown regime {threshold.regime!r}")
    L0 = threshold.L_star
    if L0 == math.inf or beta == 0.0:
        A = m / (1.0 - beta)
        B = A if p == 0.0 or beta == 0.0 else (A - m) / beta
    else:
        if abs(threshold.upsilon_star - tau_special(0.0, L0, p)) > 1e-12:
            raise DomainError("threshold result is internally inconsistent")
        A, B = _reset_values(m, beta, L0, threshold.upsilon_star)
    L = crossing_time(omega, threshold.omega_star, p)
    if L == 0:
        return omega + beta * (omega * A + (1.0 - omega) * B)
    if L == math.inf:
        return m / (1.0 - beta)
    s = beta**L
    up = tau_special(omega, L, p)
    return m * (1.0 - s) / (1.0 - beta) + s * (up + beta * (up * A + (1.0 - up) * B))


def whittle_index_closed(omega: float, p01: float, beta: float) -> float:
    """Closed-form Whittle index of belief ``omega``.

    With ``s = beta**L(0, omega)``, ``u = tau^L(0)`` and
    ``k = omega (1 - beta (1 - p01)) - beta p01``::

        W = [k (1 - s) + (1 - beta) s u] / [(1 - beta)(1 + (1 - beta) s u - k s)]

    This is the indifference subsidy when a belief reset to 0 climbs past
    ``omega`` after exactly ``L(0, omega)`` passive slots. The numerator
    differs from ``whittle_index_uncorrected``, whose numerator gives
    ``W(1) = 1/(1 - beta)`` instead of 1; this one was re-derived from the
    indifference condition. The oracle agreement test in
    ``test_rsab_whittle.py`` pins this form down.
    """
    omega = check_belief(omega)
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta} must lie in [0, 1)")
    _check_p(p01)
    L = crossing_time(0.0, omega, p01)
    if L == math.inf:
        s, ups = 0.0, 1.0
    else:
        s, ups = beta**L, tau_special(0.0, L, p01)
    k = omega * (1.0 - beta * (1.0 - p01)) - beta * p01
    num = k * (1.0 - s) + (1.0 - beta) * s * ups
    den = (1.0 - beta) * (1.0 + (1.0 - beta) * s * ups - k * s)
    return num / den


def whittle_index_uncorrected(omega: float, p01: float, beta: float, h: float = None) -> float:
    """An index formula with a faulty numerator and a free symbol ``h``.

    Kept only as a diagnostic; ``h`` defaults to ``p01``. It does not agree
    with the numeric index (see ``whittle_index_closed``).
    """
    omega = check_belief(omega)
    h = p01 if h is None else h
    L = crossing_time(0.0, omega, p01)
    if L == math.inf:
        s, ups = 0.0, 1.0
    else:
        s, ups = beta**L, tau_special(0.0, L, p01)
    num = (1.0 - s * (1.0 - beta * ups * (1.0 - beta) * (1.0 - h))) * omega + s * ups * (1.0 - beta) * (
        h * beta + 1.0
    )
    den = (beta - 1.0) * (s * (1.0 - beta * (1.0 - h)) * omega - (1.0 + s * (ups * (1.0 - beta) + h * beta)))
    return num / den


def _check_p(p01):
    if not 0.0 <= p01 <= 1.0:
        raise DomainError(f"p01={p01} is not a probability")


def whittle_index_numeric(omega: float, p01: float, beta: float, tol: float = BISECT_TOL) -> float:
    """Smallest subsidy in [0, 1] at which passivity is optimal at ``omega``."""
    omega = check_belief(omega)
    _check_p(p01)
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta} must lie in [0, 1)")

    def gap(m):
        q0, q1 = q_values_numeric(omega, SubsidyProblem(p01, beta, m))
        return q0 - q1

    lo, hi = 0.0, 1.0
    if gap(lo) >= 0:
        return lo
    if gap(hi) < -PASSIVE_TOL:
        raise DomainError(f"indifference subsidy not bracketed in [0, 1] at omega={omega}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# structural checks
# --------------------------------------------------------------------------


def belief_grid(p01: float, beta: float, step: float = 0.01) -> np.ndarray:
    """Reachable orbit of 0 together with a uniform grid over [0, 1]."""
    n = int(round(1.0 / step))
    uniform = np.linspace(0.0, 1.0, n + 1)
    return np.unique(np.concatenate([_base_grid(p01, beta)[0], uniform]))


def is_threshold_rule(passive: np.ndarray) -> bool:
    """True iff a mask over sorted beliefs is passive-then-active (no A-P-A)."""
    active = ~np.asarray(passive, dtype=bool)
    if not active.any():
        return True
    first = int(np.argmax(active))
    return bool(active[first:].all())


@dataclass
class IndexabilityReport:
    m_grid: np.ndarray
    grid: np.ndarray
    passive_counts: list
    thresholds: list
    inclusion_ok: bool
    empty_below_zero: bool
    full_above_one: bool
    thresholds_monotone: bool
    threshold_structure: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.inclusion_ok
            and self.empty_below_zero
            and self.full_above_one
            and self.thresholds_monotone
            and self.threshold_structure
        )


def indexability_scan(p01: float, beta: float, m_grid=None, step: float = 0.01) -> IndexabilityReport:
    """Passive sets over a subsidy grid and the checks that make the arm indexable."""
    if m_grid is None:
        m_grid = np.linspace(-0.1, 1.1, 101)
    m_grid = np.sort(np.asarray(m_grid, dtype=float))
    grid = belief_grid(p01, beta, step)
    failures = []
    masks, thresholds = [], []
    for m in m_grid:
        problem = SubsidyProblem(p01, beta, float(m))
        masks.append(passive_mask(grid, problem))
        thresholds.append(solve_threshold(problem).omega_star)
    inclusion = True
    for j in range(1, len(masks)):
        if np.any(masks[j - 1] & ~masks[j]):
            inclusion = False
            failures.append(f"passive set shrinks between m={m_grid[j - 1]:g} and m={m_grid[j]:g}")
    empty = all(not mk.any() for m, mk in zip(m_grid, masks) if m < 0)
    full = all(mk.all() for m, mk in zip(m_grid, masks) if m >= 1)
    if not empty:
        failures.append("nonempty passive set at a negative subsidy")
    if not full:
        failures.append("active belief at a subsidy >= 1")
    monotone = all(b >= a - 1e-12 for a, b in zip(thresholds, thresholds[1:]))
    if not monotone:
        failures.append("threshold decreases in m")
    structure = all(is_threshold_rule(mk) for m, mk in zip(m_grid, masks) if 0 <= m < 1)
    if not structure:
        failures.append("active-passive-active pattern on the grid")
    return IndexabilityReport(
        m_grid=m_grid,
        grid=grid,
        passive_counts=[int(mk.sum()) for mk in masks],
        thresholds=thresholds,
        inclusion_ok=inclusion,
        empty_below_zero=empty,
        full_above_one=full,
        thresholds_monotone=monotone,
        threshold_structure=structure,
        failures=failures,
    )


@dataclass
class ExtremeOrderingReport:
    rows: list  # (m, name, lhs, rhs, holds)
    rejected_rows: list  # the reversed m >= 1 chain, reported but not asserted

    @property
    def ok(self) -> bool:
        return all(r[-1] for r in self.rows)


def extreme_ordering_check(p01: float, beta: float, m_samples, slack: float = 1e-9) -> ExtremeOrderingReport:
    """Ordering of the action values at the extreme beliefs 0 and 1, per subsidy regime.

    For ``m >= 1`` the asserted chain is ``V(0|1) <= V(1|1) <= V(0|0)``.
    The reversed ``V(0|0) <= V(1|1) <= V(0|1)`` cannot hold (every value is
    ``m/(1-beta)`` there, so it would need ``1 <= 0``) and is only reported
    in ``rejected_rows``.
    """
    rows, rejected = [], []
    for m in m_samples:
        pr = SubsidyProblem(p01, beta, float(m))
        v00, v01 = q_values_numeric(0.0, pr)
        v10, v11 = q_values_numeric(1.0, pr)
        if 0 <= m < 1:
            checks = [
                ("V(0|1)<=V(0|0)", v01, v00),
                ("V(0|0)<=V(1|1)", v00, v11),
                ("V(1|0)<=V(1|1)", v10, v11),
            ]
        elif m < 0:
            checks = [
                ("V(0|0)<=V(0|1)", v00, v01),
                ("V(0|1)<=V(1|1)", v01, v11),
                ("V(1|0)<=V(1|1)", v10, v11),
            ]
        else:
            checks = [
                ("V(0|1)<=V(1|1)", v01, v11),
                ("V(1|1)<=V(0|0)", v11, v00),
                ("V(1|1)<=V(1|0)", v11, v10),
            ]
            for name, a, b in (("V(0|0)<=V(1|1)", v00, v11), ("V(1|1)<=V(0|1)", v11, v01)):
                rejected.append((float(m), name, a, b, a <= b + slack))
        for name, a, b in checks:
            rows.append((float(m), name, a, b, a <= b + slack))
    return ExtremeOrderingReport(rows=rows, rejected_rows=rejected)
