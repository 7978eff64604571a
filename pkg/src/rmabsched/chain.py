"""Markov models of the task queues and the belief-propagation kernels.

Two chain types are provided:

* :class:`ChainC1` -- capacity-one queue, four transition probabilities
  ``p01``/``p11`` under the passive (not scheduled) and active (scheduled)
  action. The controller's belief is the scalar ``omega = Pr[Q = 1]``.
* :class:`ChainGeneral` -- capacity ``C`` queue with a pair of tridiagonal
  row-stochastic matrices. The belief is a :class:`BeliefVec` over
  ``{0, ..., C}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# absolute tolerance for probability comparisons
PROB_TOL = 1e-12
# simplex inputs off by more than this are rejected (never renormalised)
REJECT_TOL = 1e-9


class DomainError(ValueError):
    """A belief or probability argument lies outside its domain."""


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name}={value!r} is not a probability in [0, 1]")
    return value


def check_belief(omega: float) -> float:
    """Return ``omega`` as a float, raising :class:`DomainError` outside [0, 1]."""
    return _check_prob("omega", omega)


def geometric_sum(x: float, n: int) -> float:
    """``sum_{i<n} x**i`` with the ``x == 1`` removable singularity resolved."""
    if n <= 0:
        return 0.0
    if n == 1:
        return 1.0
    if x == 1.0:
        return float(n)
    return (1.0 - x**n) / (1.0 - x)


# --------------------------------------------------------------------------
# capacity one
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainC1:
    """Capacity-one queue chain.

    ``p01_passive`` is the probability that an empty, unscheduled queue holds
    a task in the next slot; ``p11_active`` the probability that a full,
    scheduled queue is full again (a new arrival right after service), etc.
    """

    p01_passive: float
    p11_passive: float
    p01_active: float
    p11_active: float

    def __post_init__(self):
        for name in ("p01_passive", "p11_passive", "p01_active", "p11_active"):
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))

    @property
    def delta0(self) -> float:
        return self.p11_passive - self.p01_passive

    @property
    def delta1(self) -> float:
        return self.p11_active - self.p01_active

    @property
    def satisfies_assumptions(self) -> bool:
        """Ordering ``p11_active <= p01_active <= p01_passive <= p11_passive``."""
        return self.p11_active <= self.p01_active <= self.p01_passive <= self.p11_passive

    def to_general(self) -> "ChainGeneral":
        passive = [
            [1.0 - self.p01_passive, self.p01_passive],
            [1.0 - self.p11_passive, self.p11_passive],
        ]
        active = [
            [1.0 - self.p01_active, self.p01_active],
            [1.0 - self.p11_active, self.p11_active],
        ]
        return ChainGeneral(1, np.array(passive), np.array(active))

    def as_dict(self) -> dict:
        return {
            "capacity": 1,
            "p01_passive": self.p01_passive,
            "p11_passive": self.p11_passive,
            "p01_active": self.p01_active,
            "p11_active": self.p11_active,
        }


@dataclass(frozen=True)
class ValidationReport:
    integer_ratio_holds: bool  # M / K is an integer
    ordering_holds: bool  # chain ordering
    m_ratio: float
    offending: tuple = ()

    @property
    def ok(self) -> bool:
        return self.integer_ratio_holds and self.ordering_holds


def validate_assumptions(chain: ChainC1, M: int, K: int) -> ValidationReport:
    """Check the integer-ratio and chain-ordering assumptions.

    ``offending`` names every violated inequality, e.g.
    ``"p01_passive=0.2 > p11_passive=0.1"``.
    """
    offending = []
    pairs = [
        ("p11_active", "p01_active"),
        ("p01_active", "p01_passive"),
        ("p01_passive", "p11_passive"),
    ]
    for lo, hi in pairs:
        a, b = getattr(chain, lo), getattr(chain, hi)
        if not a <= b:
            offending.append(f"{lo}={a:g} > {hi}={b:g}")
    ratio_ok = K >= 1 and M % K == 0
    if not ratio_ok:
        offending.append(f"M/K={M}/{K} is not an integer")
    return ValidationReport(
        integer_ratio_holds=ratio_ok,
        ordering_holds=chain.satisfies_assumptions,
        m_ratio=M / K if K else math.inf,
        offending=tuple(offending),
    )


def tau0_1(omega: float, chain: ChainC1) -> float:
    """Belief one slot later for an unscheduled node."""
    omega = check_belief(omega)
    return omega * chain.delta0 + chain.p01_passive


def tau0_k(omega: float, k: int, chain: ChainC1) -> float:
    """Belief after ``k`` consecutive unscheduled slots (closed form)."""
    omega = check_belief(omega)
    if k < 0:
        raise DomainError(f"k={k} must be nonnegative")
    if k == 0:
        return omega
    d = chain.delta0
    dk = d**k
    return omega * dk + chain.p01_passive * geometric_sum(d, k)


def belief_update_scheduled_c1(omega: float, chain: ChainC1) -> tuple:
    """Posterior distribution of the next belief of a scheduled node.

    Returns a tuple of ``(next_belief, probability)`` pairs: the queue is
    observed full w.p. ``omega`` (next belief ``p11_active``) and empty
    otherwise (next belief ``p01_active``). Zero-probability outcomes are
    dropped and coinciding outcomes merged, so probabilities sum to 1.
    """
    omega = check_belief(omega)
    full, empty = chain.p11_active, chain.p01_active
    if full == empty or omega == 1.0:
        return ((full, 1.0),)
    if omega == 0.0:
        return ((empty, 1.0),)
    return ((full, omega), (empty, 1.0 - omega))


# --------------------------------------------------------------------------
# general capacity
# --------------------------------------------------------------------------


def _as_simplex(probs, name="belief") -> np.ndarray:
    arr = np.array(probs, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError(f"{name} must be a vector of length >= 2")
    if np.any(arr < -REJECT_TOL) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has negative or non-finite entries: {arr}")
    if abs(arr.sum() - 1.0) > REJECT_TOL:
        raise DomainError(f"{name} sums to {arr.sum()!r}, not 1")
    arr = np.clip(arr, 0.0, None)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BeliefVec:
    """Full simplex over queue states ``0..C`` (C + 1 entries)."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_simplex(self.probs))

    @property
    def capacity(self) -> int:
        return self.probs.size - 1

    @property
    def p_empty(self) -> float:
        return float(self.probs[0])

    @classmethod
    def uniform(cls, C: int) -> "BeliefVec":
        return cls(np.full(C + 1, 1.0 / (C + 1)))

    @classmethod
    def point(cls, C: int, x: int) -> "BeliefVec":
        v = np.zeros(C + 1)
        v[x] = 1.0
        return cls(v)

    @classmethod
    def from_scalar(cls, omega: float) -> "BeliefVec":
        omega = check_belief(omega)
        return cls(np.array([1.0 - omega, omega]))

    def __eq__(self, other):
        if not isinstance(other, BeliefVec):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(
            np.all(np.abs(self.probs - other.probs) <= PROB_TOL)
        )

    def __hash__(self):
        return hash(tuple(np.round(self.probs, 12)))

    def __repr__(self):
        return f"BeliefVec({np.array2string(self.probs, precision=6)})"


def _check_kernel(P, C: int, name: str) -> np.ndarray:
    P = np.array(P, dtype=float)
    if P.shape != (C + 1, C + 1):
        raise DomainError(f"{name} must be {(C + 1, C + 1)}, got {P.shape}")
    if np.any(P < -REJECT_TOL) or np.any(P > 1 + REJECT_TOL) or not np.all(np.isfinite(P)):
        raise DomainError(f"{name} has entries outside [0, 1]")
    rows = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > REJECT_TOL)
    if bad.size:
        raise DomainError(f"{name} rows {bad.tolist()} do not sum to 1: {rows[bad]}")
    x, y = np.indices(P.shape)
    if np.any(P[np.abs(x - y) > 1] != 0.0):
        raise DomainError(f"{name} is not tridiagonal (at most one arrival/expiry per slot)")
    P = np.clip(P, 0.0, 1.0)
    P.setflags(write=False)
    return P


@dataclass(frozen=True, eq=False)
class ChainGeneral:
    """Capacity-``C`` queue chain with tridiagonal passive/active kernels."""

    capacity: int
    P_passive: np.ndarray
    P_active: np.ndarray

    def __post_init__(self):
        C = int(self.capacity)
        if C < 1:
            raise DomainError(f"capacity must be >= 1, got {self.capacity}")
        object.__setattr__(self, "capacity", C)
        object.__setattr__(self, "P_passive", _check_kernel(self.P_passive, C, "P_passive"))
        object.__setattr__(self, "P_active", _check_kernel(self.P_active, C, "P_active"))

    @property
    def n_states(self) -> int:
        return self.capacity + 1

    def as_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "P_passive": self.P_passive.tolist(),
            "P_active": self.P_active.tolist(),
        }

    def to_c1(self) -> ChainC1:
        if self.capacity != 1:
            raise DomainError("only a capacity-one chain converts to ChainC1")
        return ChainC1(
            p01_passive=self.P_passive[0, 1],
            p11_passive=self.P_passive[1, 1],
            p01_active=self.P_active[0, 1],
            p11_active=self.P_active[1, 1],
        )


STUDY_CHAIN_DEFAULTS = {
    "p01_passive": 0.15,
    "p01_active": 0.05,
    "pCC_passive": 0.9,
    "pCC_active": 0.05,
    "down_passive": 0.05,
    "down_active": 0.95,
    "up_passive": 0.1,
    "up_active": 0.0,
}


def birth_death_chain(
    C: int,
    p01_passive: float,
    p01_active: float,
    pCC_passive: float,
    pCC_active: float,
    down_passive: float,
    down_active: float,
    up_passive: float,
    up_active: float,
) -> ChainGeneral:
    """Tridiagonal chain from per-row arrival/expiry probabilities.

    Interior rows ``1..C-1`` take ``down_*``/``up_*`` verbatim with the
    diagonal as remainder. Row 0 uses ``p01_*`` and row ``C`` uses
    ``pCC_*``; the remaining in-band entry of those boundary rows is one
    minus the listed entry, which keeps every row stochastic.
    """
    mats = []
    for p01, pCC, down, up in (
        (p01_passive, pCC_passive, down_passive, up_passive),
        (p01_active, pCC_active, down_active, up_active),
    ):
        P = np.zeros((C + 1, C + 1))
        P[0, 1] = p01
        P[0, 0] = 1.0 - p01
        for k in range(1, C):
            P[k, k - 1] = down
            P[k, k + 1] = up
            P[k, k] = 1.0 - down - up
        P[C, C] = pCC
        P[C, C - 1] = 1.0 - pCC
        mats.append(P)
    return ChainGeneral(C, mats[0], mats[1])


def study_chain(C: int, **overrides) -> ChainGeneral:
    """The numerical-study chain for capacity ``C`` (defaults overridable)."""
    params = dict(STUDY_CHAIN_DEFAULTS)
    unknown = set(overrides) - set(params)
    if unknown:
        raise TypeError(f"unknown chain parameters: {sorted(unknown)}")
    params.update(overrides)
    return birth_death_chain(C, **params)


def propagate_passive_vec(omega: BeliefVec, chain: ChainGeneral) -> BeliefVec:
    """One unscheduled slot: ``omega @ P_passive``."""
    if omega.probs.size != chain.n_states:
        raise DomainError(
            f"belief has {omega.probs.size} entries, chain has {chain.n_states} states"
        )
    return BeliefVec(omega.probs @ chain.P_passive)


def posterior_after_activation(x: int, chain: ChainGeneral) -> BeliefVec:
    """Next-slot belief after the node was scheduled and found in state ``x``."""
    if not 0 <= x <= chain.capacity:
        raise IndexError(f"state {x} outside 0..{chain.capacity}")
    return BeliefVec(chain.P_active[x].copy())


# --------------------------------------------------------------------------
# system configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemConfig:
    """Nodes, servers, capacity, discount, horizon and initial beliefs.

    ``horizon=None`` means an unbounded horizon and requires ``beta < 1``.
    A non-integer ``M / K`` is accepted but flagged through
    ``integer_ratio`` (and a ``UserWarning``).
    """

    M: int
    K: int
    C: int = 1
    beta: float = 1.0
    horizon: Optional[int] = None
    initial_beliefs: tuple = field(default=())

    def __post_init__(self):
        if not 1 <= self.K <= self.M:
            raise DomainError(f"need 1 <= K <= M, got K={self.K}, M={self.M}")
        if self.C < 1:
            raise DomainError(f"capacity must be >= 1, got {self.C}")
        beta = float(self.beta)
        if not 0.0 <= beta <= 1.0:
            raise DomainError(f"beta={beta} outside [0, 1]")
        object.__setattr__(self, "beta", beta)
        if self.horizon is None and beta >= 1.0:
            raise DomainError("an unbounded horizon needs beta < 1")
        if self.horizon is not None and int(self.horizon) < 1:
            raise DomainError(f"horizon must be >= 1, got {self.horizon}")
        beliefs = tuple(self.initial_beliefs)
        if beliefs:
            if len(beliefs) != self.M:
                raise DomainError(f"{len(beliefs)} initial beliefs for M={self.M} nodes")
            if self.C == 1 and not isinstance(beliefs[0], BeliefVec):
                beliefs = tuple(check_belief(w) for w in beliefs)
            else:
                beliefs = tuple(b if isinstance(b, BeliefVec) else BeliefVec(b) for b in beliefs)
                if any(b.capacity != self.C for b in beliefs):
                    raise DomainError("initial belief vectors must have C + 1 entries")
        object.__setattr__(self, "initial_beliefs", beliefs)
        if not self.integer_ratio:
            warnings.warn(
                f"M/K = {self.M}/{self.K} is not an integer; round-robin optimality "
                "results do not apply",
                UserWarning,
                stacklevel=3,
            )

    @property
    def m(self) -> float:
        return self.M / self.K

    @property
    def integer_ratio(self) -> bool:
        return self.M % self.K == 0

    def scalar_beliefs(self) -> tuple:
        """Initial beliefs as ``Pr[queue non-empty]`` scalars."""
        out = []
        for b in self.initial_beliefs:
            out.append(1.0 - b.p_empty if isinstance(b, BeliefVec) else float(b))
        return tuple(out)


def belief_matrix(beliefs: Sequence, C: int) -> np.ndarray:
    """Stack scalar (C = 1) or vector beliefs into an ``(M, C + 1)`` array."""
    rows = []
    for b in beliefs:
        if isinstance(b, BeliefVec):
            rows.append(b.probs)
        elif np.ndim(b) == 0:
            w = check_belief(b)
            if C != 1:
                raise DomainError("scalar beliefs only make sense for capacity one")
            rows.append(np.array([1.0 - w, w]))
        else:
            rows.append(BeliefVec(b).probs)
    out = np.array(rows, dtype=float)
    if out.shape[1] != C + 1:
        raise DomainError(f"beliefs have {out.shape[1]} entries, expected {C + 1}")
    return out
