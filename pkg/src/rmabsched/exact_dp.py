"""Exact finite-horizon DP over the reachable belief space (capacity one).

This is the optimality oracle: it enumerates every K-subset at every slot
and every observation outcome of the scheduled nodes, so it is only usable
at desk scale (a handful of nodes, a few slots).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

from .chain import ChainC1, DomainError, SystemConfig, belief_update_scheduled_c1, check_belief, tau0_1
from .policies import Action, build_rr_schedule, rr_throughput

ACTION_BUDGET = 10**4
STATE_BUDGET = 10**7
GAP_TOL = 1e-9


class BudgetExceeded(RuntimeError):
    """The exact solve would exceed its action-set or state budget."""

    def __init__(self, message: str, **sizing):
        super().__init__(message)
        self.sizing = sizing


@dataclass(frozen=True)
class BeliefStateC1:
    omegas: tuple
    t: int = 1

    def __post_init__(self):
        object.__setattr__(self, "omegas", tuple(check_belief(w) for w in self.omegas))
        if self.t < 1:
            raise DomainError(f"slot t={self.t} must be >= 1")


@dataclass
class DpResult:
    value: float
    best_action: Action
    table: dict = field(repr=False, default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.table)


def _key(t, omegas):
    return (t, tuple(round(w, 12) for w in omegas))


def bellman_value(
    state: BeliefStateC1,
    config: SystemConfig,
    chain: ChainC1,
    *,
    state_budget: int = STATE_BUDGET,
    action_budget: int = ACTION_BUDGET,
) -> DpResult:
    """Optimal throughput ``V_t*(omega)`` over slots ``t..T`` by exhaustive DP.

    The memo table maps ``(slot, beliefs rounded to 12 digits)`` to
    ``(value, best action)``; ties between actions keep the first subset in
    lexicographic order.
    """
    if config.horizon is None:
        raise DomainError("exact DP needs a finite horizon")
    if config.C != 1:
        raise DomainError("exact DP is implemented for capacity one only")
    M, K, T, beta = config.M, config.K, int(config.horizon), config.beta
    if len(state.omegas) != M:
        raise DomainError(f"state has {len(state.omegas)} beliefs, config has M={M}")
    n_actions = math.comb(M, K)
    if n_actions > action_budget:
        raise BudgetExceeded(
            f"C({M},{K}) = {n_actions} actions exceeds budget {action_budget}",
            actions=n_actions,
            action_budget=action_budget,
        )
    actions = list(itertools.combinations(range(M), K))
    table: dict = {}

    def solve(t, omegas):
        key = _key(t, omegas)
        hit = table.get(key)
        if hit is not None:
            return hit[0]
        if len(table) >= state_budget:
            raise BudgetExceeded(
                f"reachable-state budget {state_budget} exceeded at slot {t}",
                states=len(table),
                state_budget=state_budget,
                slot=t,
            )
        last = t == T or beta == 0.0
        passive = [tau0_1(w, chain) for w in omegas]
        best, best_u = -math.inf, None
        for U in actions:
            reward = sum(omegas[i] for i in U)
            cont = 0.0
            if not last:
                branches = [belief_update_scheduled_c1(omegas[i], chain) for i in U]
                nxt = list(passive)
                for combo in itertools.product(*branches):
                    prob = 1.0
                    for i, (w_next, p) in zip(U, combo):
                        nxt[i] = w_next
                        prob *= p
                    cont += prob * solve(t + 1, nxt)
            value = reward + beta * cont
            if value > best:
                best, best_u = value, U
        table[key] = (best, best_u)
        return best

    value = solve(state.t, list(state.omegas))
    best_u = table[_key(state.t, state.omegas)][1]
    return DpResult(value=value, best_action=Action(best_u), table=table)


@dataclass(frozen=True)
class Certificate:
    v_mp: float
    v_star: float
    gap: float
    passed: bool


def certify_mp_optimality(config: SystemConfig, chain: ChainC1, **budgets) -> Certificate:
    """Compare the closed-form myopic (sorted round-robin) value with the DP optimum."""
    omegas = config.scalar_beliefs()
    schedule = build_rr_schedule(omegas, config.K)
    v_mp = rr_throughput(omegas, schedule, config.horizon, config.beta, chain)
    v_star = bellman_value(BeliefStateC1(omegas, 1), config, chain, **budgets).value
    gap = v_star - v_mp
    return Certificate(v_mp=v_mp, v_star=v_star, gap=gap, passed=abs(gap) <= GAP_TOL)


def deviation_values(state: BeliefStateC1, config: SystemConfig, chain: ChainC1) -> dict:
    """Value of "serve S now, then round-robin on the sorted rest", for every S.

    ``state.omegas`` must be sorted decreasingly. Keys are the K-subsets;
    the top-K subset is the myopic policy itself.
    """
    omegas = state.omegas
    if any(a < b for a, b in zip(omegas, omegas[1:])):
        raise DomainError("beliefs must be sorted decreasingly")
    if config.horizon is None:
        raise DomainError("needs a finite horizon")
    M, K = config.M, config.K
    n_subsets = math.comb(M, K)
    if n_subsets > ACTION_BUDGET:
        raise BudgetExceeded(f"{n_subsets} subsets exceeds budget", subsets=n_subsets)
    remaining = int(config.horizon) - state.t + 1
    out = {}
    for S in itertools.combinations(range(M), K):
        rest = [i for i in range(M) if i not in S]
        vec = [omegas[i] for i in S] + [omegas[i] for i in rest]
        sched = build_rr_schedule(vec, K, sort=False)
        out[S] = rr_throughput(vec, sched, remaining, config.beta, chain)
    return out


def myopic_beats_deviations(state: BeliefStateC1, config: SystemConfig, chain: ChainC1) -> bool:
    """True iff no K-subset followed by round-robin beats the myopic policy."""
    values = deviation_values(state, config, chain)
    v_mp = values[tuple(range(config.K))]
    return all(v <= v_mp + GAP_TOL for v in values.values())
