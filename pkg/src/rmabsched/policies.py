"""Myopic policy, its round-robin structure and the closed-form RR throughput.

Nodes are indexed from 0. Ties between equal beliefs always go to the lower
node index, both in the myopic choice and in the initial round-robin sort.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .chain import BeliefVec, ChainC1, DomainError, check_belief, geometric_sum, tau0_k


@dataclass(frozen=True)
class Action:
    """Set of scheduled node indices, stored sorted."""

    nodes: tuple

    def __post_init__(self):
        nodes = tuple(sorted(int(i) for i in self.nodes))
        if len(set(nodes)) != len(nodes):
            raise DomainError(f"duplicate node in action {nodes}")
        if nodes and nodes[0] < 0:
            raise DomainError(f"negative node index in {nodes}")
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def __contains__(self, i):
        return i in self.nodes


def _is_vector_belief(beliefs) -> bool:
    if isinstance(beliefs, np.ndarray):
        return beliefs.ndim == 2
    return len(beliefs) > 0 and (
        isinstance(beliefs[0], BeliefVec) or np.ndim(beliefs[0]) == 1
    )


def myopic_action(beliefs, K: int) -> Action:
    """Schedule the ``K`` nodes with the largest immediate expected reward.

    Scalar beliefs (capacity one) pick the largest ``omega``; vector beliefs
    pick the smallest empty-queue probability ``omega[0]``.
    """
    M = len(beliefs)
    if not 1 <= K <= M:
        raise DomainError(f"cannot schedule K={K} of M={M} nodes")
    if _is_vector_belief(beliefs):
        score = np.array(
            [b.p_empty if isinstance(b, BeliefVec) else float(b[0]) for b in beliefs]
        )
    else:
        score = -np.array([check_belief(w) for w in beliefs])
    # stable sort keeps the lower index first on ties
    order = np.argsort(score, kind="stable")
    return Action(tuple(order[:K].tolist()))


@dataclass(frozen=True)
class RrSchedule:
    """Round-robin schedule: ``period`` groups of ``K`` nodes, cycled."""

    node_order: tuple
    groups: tuple
    period: int

    @property
    def M(self) -> int:
        return len(self.node_order)

    @property
    def K(self) -> int:
        return len(self.groups[0])

    def group_at(self, t: int) -> tuple:
        """Group scheduled at slot ``t`` (slots start at 1)."""
        return self.groups[(t - 1) % self.period]

    def group_of(self) -> dict:
        """Map node -> 1-based group number."""
        return {i: g + 1 for g, grp in enumerate(self.groups) for i in grp}

    def table(self, T: int) -> np.ndarray:
        """``(T, K)`` array of the nodes scheduled in slots ``1..T``."""
        return np.array([self.group_at(t) for t in range(1, T + 1)], dtype=np.int64)


def build_rr_schedule(initial_beliefs: Sequence[float], K: int, *, sort: bool = True) -> RrSchedule:
    """Sort the beliefs decreasingly and cut the order into blocks of ``K``.

    With ``sort=False`` the nodes keep their given order, which is the
    round-robin policy applied to an arbitrary (unsorted) belief vector.
    """
    M = len(initial_beliefs)
    if not 1 <= K <= M:
        raise DomainError(f"cannot schedule K={K} of M={M} nodes")
    if M % K:
        raise DomainError(f"M/K = {M}/{K} is not an integer")
    if sort:
        w = np.array([check_belief(x) for x in initial_beliefs])
        order = tuple(np.argsort(-w, kind="stable").tolist())
    else:
        order = tuple(range(M))
    groups = tuple(order[g * K:(g + 1) * K] for g in range(M // K))
    return RrSchedule(node_order=order, groups=groups, period=M // K)


def _alpha_psi(chain: ChainC1, m: int) -> tuple:
    d0m = chain.delta0 ** (m - 1)
    alpha = chain.delta1 * d0m
    psi = chain.p01_active * d0m + chain.p01_passive * geometric_sum(chain.delta0, m - 1)
    return alpha, psi


def phi_j(omega: float, j: int, chain: ChainC1, m: int) -> float:
    """Expected belief at the ``j``-th return of a node scheduled every ``m`` slots.

    One period is one active slot followed by ``m - 1`` passive ones, an
    affine map ``omega -> alpha * omega + psi``; this is its ``j``-fold
    composition.
    """
    omega = check_belief(omega)
    if j < 0 or m < 1:
        raise DomainError(f"need j >= 0 and m >= 1, got j={j}, m={m}")
    if j == 0:
        return omega
    alpha, psi = _alpha_psi(chain, m)
    return omega * alpha**j + psi * geometric_sum(alpha, j)


def _geom_inf(x: float, H) -> float:
    if H == math.inf:
        if abs(x) >= 1.0:
            raise DomainError("infinite horizon series diverges (needs beta < 1)")
        return 1.0 / (1.0 - x)
    return geometric_sum(x, H)


def _weighted_index_sum(b: float, H) -> float:
    """``sum_{j<H} j * b**j``."""
    if H == math.inf:
        if abs(b) >= 1.0:
            raise DomainError("infinite horizon series diverges (needs beta < 1)")
        return b / (1.0 - b) ** 2
    if b == 1.0:
        return H * (H - 1) / 2.0
    return b * (1.0 - H * b ** (H - 1) + (H - 1) * b**H) / (1.0 - b) ** 2


def theta_H(omega: float, H, beta: float, chain: ChainC1, m: int) -> float:
    """Discounted reward of a node scheduled ``H`` times, once every ``m`` slots.

    ``omega`` is its belief at the first scheduled slot; discounting starts
    there. ``H`` may be ``math.inf`` when ``beta < 1``.
    """
    omega = check_belief(omega)
    if not (H == math.inf or (int(H) == H and H >= 1)):
        raise DomainError(f"H={H} must be a positive integer or inf")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta={beta} outside [0, 1]")
    if H == 1:
        return omega
    alpha, psi = _alpha_psi(chain, m)
    b = beta**m
    ba = b * alpha
    lin = _geom_inf(ba, H)
    if alpha == 1.0:
        offset = psi * _weighted_index_sum(b, H)
    else:
        offset = psi * (_geom_inf(b, H) - lin) / (1.0 - alpha)
    return offset + lin * omega


def group_visits(g: int, T: Optional[int], period: int):
    """Number of slots in ``1..T`` at which group ``g`` (1-based) is served."""
    if T is None or T == math.inf:
        return math.inf
    if g > T:
        return 0
    return (T - g) // period + 1


def rr_throughput(
    initial_beliefs: Sequence[float],
    schedule: RrSchedule,
    T: Optional[int],
    beta: float,
    chain: ChainC1,
) -> float:
    """Expected discounted throughput of the round-robin schedule.

    Node ``i`` in group ``g`` is first served at slot ``g`` with belief
    ``tau0^(g-1)(omega_i)`` and contributes
    ``beta**(g-1) * theta_H(...)``. ``T=None`` is the unbounded horizon.
    """
    if len(initial_beliefs) != schedule.M:
        raise DomainError("schedule and belief vector disagree on M")
    if T is None and beta >= 1.0:
        raise DomainError("an unbounded horizon needs beta < 1")
    m = schedule.period
    total = 0.0
    for g, group in enumerate(schedule.groups, start=1):
        H = group_visits(g, T, m)
        if H == 0:
            continue
        disc = beta ** (g - 1)
        for i in group:
            w = tau0_k(initial_beliefs[i], g - 1, chain)
            total += disc * theta_H(w, H, beta, chain, m)
    return total
