"""Upper bound on the MP throughput by relaxing the per-slot server constraint.

Only the discounted average number of activations is constrained, so the
problem splits into identical one-arm problems, each an occupation-measure
LP over the beliefs reachable from the initial belief and the activation
posteriors. The passive chain between two activations is capped at ``G``
slots to keep that state set finite.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import BeliefVec, ChainGeneral, DomainError, SystemConfig
from .simplex import LpProblem, LpSolution, simplex_solve

DEDUP_TOL = 1e-10
STATE_BUDGET = 200000
SCALINGS = ("normalized", "discounted", "unit_mass")


class StateBudgetExceeded(RuntimeError):
    def __init__(self, message, n_states):
        super().__init__(message)
        self.n_states = n_states


@dataclass
class ReachableBeliefGraph:
    states: np.ndarray  # (N, C + 1)
    gaps: np.ndarray  # passive slots since the last reset
    initial_index: int
    passive_next: np.ndarray  # -1 where the passive arc is cut
    active_arcs: list  # per state: list of (observed x, probability, successor)
    G: int

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def belief(self, i) -> BeliefVec:
        return BeliefVec(self.states[i])


class _StateIndex:
    """Belief store with max-norm deduplication."""

    def __init__(self, width):
        self.data = np.empty((64, width))
        self.n = 0

    def find_or_add(self, v):
        if self.n:
            dist = np.max(np.abs(self.data[: self.n] - v), axis=1)
            j = int(np.argmin(dist))
            if dist[j] <= DEDUP_TOL:
                return j, False
        if self.n == self.data.shape[0]:
            self.data = np.vstack([self.data, np.empty_like(self.data)])
        self.data[self.n] = v
        self.n += 1
        return self.n - 1, True


def build_reachable_graph(
    chain: ChainGeneral, initial: BeliefVec, G: int, state_budget: int = STATE_BUDGET
) -> ReachableBeliefGraph:
    """Breadth-first closure of the beliefs a single arm can visit.

    Seeds are the initial belief and the activation posteriors (rows of the
    active kernel). A state reached after ``G - 1`` passive slots has no
    passive arc, so activation is forced there.
    """
    if G < 1:
        raise DomainError(f"G={G} must be >= 1")
    if initial.probs.size != chain.n_states:
        raise DomainError("initial belief and chain disagree on capacity")
    P0, P1 = chain.P_passive, chain.P_active
    store = _StateIndex(chain.n_states)
    gaps = []
    queue = deque()
    init_idx, _ = store.find_or_add(initial.probs)
    gaps.append(0)
    queue.append(init_idx)
    row_idx = []
    for x in range(chain.n_states):
        j, new = store.find_or_add(P1[x])
        if new:
            gaps.append(0)
            queue.append(j)
        else:
            gaps[j] = 0
        row_idx.append(j)
    passive_next = {}
    while queue:
        i = queue.popleft()
        if gaps[i] >= G - 1:
            continue
        j, new = store.find_or_add(store.data[i] @ P0)
        if new:
            gaps.append(gaps[i] + 1)
            queue.append(j)
            if store.n > state_budget:
                raise StateBudgetExceeded(f"more than {state_budget} reachable beliefs", store.n)
        passive_next[i] = j
    n = store.n
    states = store.data[:n].copy()
    nxt = np.full(n, -1, dtype=np.int64)
    for i, j in passive_next.items():
        nxt[i] = j
    arcs = []
    for i in range(n):
        merged = {}
        for x in range(chain.n_states):
            p = states[i, x]
            if p > 0.0:
                merged.setdefault(row_idx[x], []).append((x, p))
        arcs.append([(obs[0][0], sum(q for _, q in obs), succ) for succ, obs in merged.items()])
    return ReachableBeliefGraph(
        states=states,
        gaps=np.array(gaps, dtype=np.int64),
        initial_index=init_idx,
        passive_next=nxt,
        active_arcs=arcs,
        G=G,
    )


@dataclass
class AssembledLp:
    problem: LpProblem
    var_state: np.ndarray
    var_action: np.ndarray
    scaling: str
    beta: float
    budget_row: int
    mass_row: int

    def per_arm_value(self, objective: float) -> float:
        """LP objective converted to the discounted one-arm throughput."""
        if self.scaling == "discounted":
            return objective
        return objective / (1.0 - self.beta)


def assemble_lp(graph: ReachableBeliefGraph, beta: float, K: int, M: int, scaling: str = "normalized") -> AssembledLp:
    """Occupation-measure LP of the relaxed one-arm problem.

    Rows: total mass, activation budget, then one flow balance per state.
    ``scaling`` picks the measure's normalisation:

    * ``"normalized"`` -- mass 1, budget ``K/M``, balances
      ``z0 + z1 - beta * inflow = (1 - beta) * [initial]``;
    * ``"discounted"`` -- mass ``1/(1-beta)``, budget ``K/(M(1-beta))``,
      balances with right-hand side ``[initial]``;
    * ``"unit_mass"`` -- mass 1 with the discounted budget and balances. The
      balances alone force a total mass of ``1/(1-beta)``, so this variant is
      infeasible for every ``beta > 0``; it exists to demonstrate that.

    In the first two the mass row is implied by the balances.
    """
    if scaling not in SCALINGS:
        raise ValueError(f"scaling must be one of {SCALINGS}")
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta} must lie in [0, 1)")
    if not 1 <= K <= M:
        raise DomainError(f"need 1 <= K <= M, got K={K}, M={M}")
    N = graph.n_states
    var_state, var_action = [], []
    col_of = {}
    for s in range(N):
        for u in (0, 1):
            if u == 0 and graph.passive_next[s] < 0:
                continue
            col_of[(s, u)] = len(var_state)
            var_state.append(s)
            var_action.append(u)
    n_var = len(var_state)
    var_state = np.array(var_state, dtype=np.int64)
    var_action = np.array(var_action, dtype=np.int64)
    reward = np.where(var_action == 1, 1.0 - graph.states[var_state, 0], 0.0)

    rows, cols, vals = [], [], []
    mass_row, budget_row, first_flow = 0, 1, 2
    for c in range(n_var):
        rows.append(mass_row)
        cols.append(c)
        vals.append(1.0)
        if var_action[c] == 1:
            rows.append(budget_row)
            cols.append(c)
            vals.append(1.0)
        s = var_state[c]
        rows.append(first_flow + s)
        cols.append(c)
        vals.append(1.0)
        if var_action[c] == 0:
            rows.append(first_flow + graph.passive_next[s])
            cols.append(c)
            vals.append(-beta)
        else:
            for _, p, succ in graph.active_arcs[s]:
                rows.append(first_flow + succ)
                cols.append(c)
                vals.append(-beta * p)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(first_flow + N, n_var))
    A.sum_duplicates()
    b = np.zeros(first_flow + N)
    if scaling == "normalized":
        b[mass_row] = 1.0
        b[budget_row] = K / M
        b[first_flow + graph.initial_index] = 1.0 - beta
    else:
        b[mass_row] = 1.0 / (1.0 - beta) if scaling == "discounted" else 1.0
        b[budget_row] = K / (M * (1.0 - beta))
        b[first_flow + graph.initial_index] = 1.0
    names = [f"z[{s},{u}]" for s, u in zip(var_state, var_action)]
    row_names = ["mass", "budget"] + [f"flow[{s}]" for s in range(N)]
    problem = LpProblem(reward, A, b, var_names=names, row_names=row_names)
    return AssembledLp(problem, var_state, var_action, scaling, beta, budget_row, mass_row)


# --------------------------------------------------------------------------
# Lagrangian relaxation of the budget: crash basis and dual cross-check
# --------------------------------------------------------------------------


class _ArmMdp:
    """The one-arm MDP on the graph, for policy iteration under a subsidy."""

    def __init__(self, graph: ReachableBeliefGraph, beta: float):
        self.graph, self.beta = graph, beta
        N = graph.n_states
        self.N = N
        self.can_rest = graph.passive_next >= 0
        r = np.flatnonzero(self.can_rest)
        self.P0 = sp.csr_matrix((np.ones(r.size), (r, graph.passive_next[r])), shape=(N, N))
        rows, cols, vals = [], [], []
        for s, arcs in enumerate(graph.active_arcs):
            for _, p, succ in arcs:
                rows.append(s)
                cols.append(succ)
                vals.append(p)
        self.P1 = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        self.R1 = 1.0 - graph.states[:, 0]
        self.eye = sp.identity(N, format="csr")

    def _transition(self, active):
        a = sp.diags(active.astype(float))
        return (a @ self.P1 + (self.eye - a) @ self.P0).tocsc()

    def evaluate(self, active, subsidy):
        P = self._transition(active)
        r = np.where(active, self.R1, subsidy)
        return spla.spsolve((self.eye - self.beta * P).tocsc(), r)

    def solve(self, subsidy, active=None):
        """Policy iteration; ties go to the passive action."""
        if active is None:
            active = ~self.can_rest
        for _ in range(1000):
            v = self.evaluate(active, subsidy)
            q0 = np.where(self.can_rest, subsidy + self.beta * (self.P0 @ v), -np.inf)
            q1 = self.R1 + self.beta * (self.P1 @ v)
            tol = 1e-11 * max(1.0, np.max(np.abs(v)))
            better = np.where(active, q0 > q1 + tol, q1 > q0 + tol)
            if not better.any():
                return active, v
            active = np.where(better, ~active, active)
        raise RuntimeError("policy iteration did not settle")

    def occupation(self, active):
        """Normalised occupation measure (total mass 1) of a stationary policy."""
        P = self._transition(active)
        d = np.zeros(self.N)
        d[self.graph.initial_index] = 1.0 - self.beta
        return spla.spsolve((self.eye - self.beta * P.T).tocsc(), d)


@dataclass
class LagrangianResult:
    subsidy: float
    active: np.ndarray
    usage: float
    dual_value: float  # per-arm discounted value of the Lagrangian dual


def lagrangian_policy(graph: ReachableBeliefGraph, beta: float, K: int, M: int, iters: int = 60) -> LagrangianResult:
    """Smallest passivity subsidy whose optimal policy respects the budget."""
    mdp = _ArmMdp(graph, beta)
    target = K / M
    init = graph.initial_index

    def usage(active):
        return float(np.sum(mdp.occupation(active)[active]))

    lo, hi = -1.0, 2.0
    # if even hi overshoots the budget the crash basis is infeasible and the
    # solver falls back to its all-artificial start
    act_hi, v_hi = mdp.solve(hi)
    act_lo, _ = mdp.solve(lo)
    if usage(act_lo) <= target + 1e-12:
        hi, act_hi = lo, act_lo
        v_hi = mdp.evaluate(act_hi, hi)
    else:
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            act, v = mdp.solve(mid, act_hi.copy())
            if usage(act) <= target + 1e-12:
                hi, act_hi, v_hi = mid, act, v
            else:
                lo = mid
    # dual function min_l [V_l(init) - l (1/(1-beta) - budget)]
    dual = float(v_hi[init] - hi * (1.0 - target) / (1.0 - beta))
    return LagrangianResult(subsidy=hi, active=act_hi, usage=usage(act_hi), dual_value=dual)


def crash_basis(lp: AssembledLp, graph: ReachableBeliefGraph, active: np.ndarray) -> list:
    """One policy column per flow row; artificials on the mass and budget rows."""
    col = {(int(s), int(u)): i for i, (s, u) in enumerate(zip(lp.var_state, lp.var_action))}
    basis = [-1, -1]
    for s in range(graph.n_states):
        basis.append(col[(s, 1 if active[s] else 0)])
    return basis


# --------------------------------------------------------------------------
# the bound
# --------------------------------------------------------------------------


def default_gap_cap(beta: float, eps: float = 1e-9) -> int:
    """Smallest ``G`` with ``beta**G < eps``."""
    if beta <= 0.0:
        return 1
    G = max(1, math.ceil(math.log(eps) / math.log(beta)))
    while beta**G >= eps:
        G += 1
    while G > 1 and beta ** (G - 1) < eps:
        G -= 1
    return G


@dataclass
class BoundReport:
    bound: float
    normalized: float
    per_arm: float
    G: int
    status: str
    n_states: int
    iterations: int
    bound_2G: Optional[float] = None
    lagrangian_per_arm: Optional[float] = None
    residual: float = float("nan")
    solution: Optional[LpSolution] = field(default=None, repr=False)


def solve_relaxed_lp(graph, beta, K, M, *, scaling="normalized", use_crash=True, rule="dantzig"):
    lp = assemble_lp(graph, beta, K, M, scaling=scaling)
    basis, lag = None, None
    if use_crash and scaling == "normalized":
        lag = lagrangian_policy(graph, beta, K, M)
        basis = crash_basis(lp, graph, lag.active)
    sol = simplex_solve(lp.problem, rule=rule, initial_basis=basis)
    return lp, sol, lag


def upper_bound_throughput(
    chain: ChainGeneral,
    initial: BeliefVec,
    config: SystemConfig,
    G: Optional[int] = None,
    *,
    sensitivity: bool = True,
    rule: str = "dantzig",
) -> BoundReport:
    """``M`` times the relaxed one-arm LP value, and its normalisation by ``K/(1-beta)``."""
    beta, K, M = config.beta, config.K, config.M
    if config.horizon is not None:
        raise DomainError("the relaxed bound is for the unbounded discounted horizon")
    if G is None:
        G = default_gap_cap(beta)
    graph = build_reachable_graph(chain, initial, G)
    lp, sol, lag = solve_relaxed_lp(graph, beta, K, M, rule=rule)
    if sol.status != "optimal":
        return BoundReport(math.nan, math.nan, math.nan, G, sol.status, graph.n_states, sol.iterations)
    per_arm = lp.per_arm_value(sol.value)
    bound = M * per_arm
    report = BoundReport(
        bound=bound,
        normalized=bound * (1.0 - beta) / K,
        per_arm=per_arm,
        G=G,
        status=sol.status,
        n_states=graph.n_states,
        iterations=sol.iterations,
        lagrangian_per_arm=None if lag is None else lag.dual_value,
        residual=sol.residual,
        solution=sol,
    )
    if sensitivity:
        g2 = build_reachable_graph(chain, initial, 2 * G)
        lp2, sol2, _ = solve_relaxed_lp(g2, beta, K, M, rule=rule)
        if sol2.status == "optimal":
            report.bound_2G = M * lp2.per_arm_value(sol2.value)
    return report
