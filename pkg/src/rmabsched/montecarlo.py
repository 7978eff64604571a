"""Seeded Monte Carlo simulation of the true queues under a belief-based policy.

The controller only ever sees its beliefs; true queue states are sampled
from the initial beliefs and evolve under the chain given the action.

Random numbers: replication ``r`` lives in chunk ``c = r // chunk_size``
and chunk ``c`` draws its uniforms from the stream
``SeedSequence(seed, spawn_key=(c,))``. ``chunk_size`` depends only on the
horizon and ``M``, so replication ``r`` sees the same numbers whatever
``R`` is and in whatever order the chunks are run.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels_py, kernels
from .chain import BeliefVec, ChainC1, ChainGeneral, DomainError, SystemConfig, belief_matrix, belief_update_scheduled_c1, geometric_sum, tau0_1
from .exact_dp import BudgetExceeded
from .policies import build_rr_schedule, myopic_action

POLICIES = ("myopic", "rr", "whittle", "custom")
TRUNCATION_EPS = 1e-6
CHUNK_DOUBLES = 2**22
MAX_CHUNK = 1024
LEAF_BUDGET = 10**7


def effective_horizon(beta: float, eps: float = TRUNCATION_EPS) -> int:
    """``ceil(ln eps / ln beta)``: the horizon after which ``beta**T < eps``."""
    if not 0.0 < beta < 1.0:
        raise DomainError(f"truncation needs 0 < beta < 1, got {beta}")
    return math.ceil(math.log(eps) / math.log(beta))


def chunk_size(T: int, M: int) -> int:
    return max(1, min(MAX_CHUNK, CHUNK_DOUBLES // ((T + 1) * M)))


def chunk_uniforms(seed: int, chunk: int, n: int, T: int, M: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(chunk,))
    return np.random.Generator(np.random.PCG64(ss)).random((n, T + 1, M))


@dataclass
class SimConfig:
    system: SystemConfig
    chain: object  # ChainC1 or ChainGeneral
    policy: str = "myopic"
    replications: int = 10000
    seed: int = 0
    T_eff: Optional[int] = None
    criterion: str = "discounted"
    custom_actions: Optional[Sequence] = None
    backend: Optional[str] = None  # "compiled", "python" or None for the default

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise DomainError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.criterion not in ("discounted", "average"):
            raise DomainError(f"unknown criterion {self.criterion!r}")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        if self.policy == "whittle" and self.system.C != 1:
            raise DomainError("the Whittle policy is only defined for capacity one")
        if self.policy == "custom" and self.custom_actions is None:
            raise DomainError("custom policy needs custom_actions")
        if self.backend not in (None, "compiled", "python"):
            raise DomainError(f"unknown backend {self.backend!r}")

    @property
    def horizon(self) -> int:
        sys_ = self.system
        if sys_.horizon is not None:
            return int(sys_.horizon)
        if self.T_eff is not None:
            return int(self.T_eff)
        if self.criterion == "average":
            raise DomainError("the average criterion needs a finite horizon")
        return effective_horizon(sys_.beta)


@dataclass
class ThroughputReport:
    mean: float
    normalized: float
    stderr: float
    replications: int
    seed: int
    T: int
    criterion: str
    truncation_bias: float
    backend: str
    slot_means: np.ndarray = field(repr=False, default=None)
    totals: np.ndarray = field(repr=False, default=None)

    @property
    def half_width(self) -> float:
        """Three-standard-error half width."""
        return 3.0 * self.stderr


def _general_chain(chain, C) -> ChainGeneral:
    if isinstance(chain, ChainC1):
        if C != 1:
            raise DomainError("a capacity-one chain cannot drive a C > 1 system")
        return chain.to_general()
    if not isinstance(chain, ChainGeneral):
        raise DomainError(f"unsupported chain type {type(chain).__name__}")
    if chain.capacity != C:
        raise DomainError(f"chain capacity {chain.capacity} differs from system C={C}")
    return chain


def _cum_rows(P: np.ndarray) -> np.ndarray:
    """Row-wise cumulative sums whose tail from the last positive entry is 2.0.

    A uniform in [0, 1) then always lands on a state of positive probability.
    """
    P = np.atleast_2d(P)
    cum = np.cumsum(P, axis=1)
    for x in range(P.shape[0]):
        last = int(np.flatnonzero(P[x] > 0.0)[-1])
        cum[x, last:] = 2.0
    return np.ascontiguousarray(cum)


def _whittle_score(chain: ChainC1, beta: float):
    from .rsab_whittle import whittle_index_closed

    if not (chain.p11_active == 0.0 and chain.p11_passive == 1.0 and chain.p01_active == chain.p01_passive):
        raise DomainError("the closed-form Whittle index needs p11_active=0, p11_passive=1, equal p01")
    p = chain.p01_passive
    cache = {}

    def one(w):
        v = cache.get(w)
        if v is None:
            v = cache[w] = whittle_index_closed(min(max(w, 0.0), 1.0), p, beta)
        return v

    vec = np.vectorize(one, otypes=[float])
    return lambda omegas: vec(omegas)


def _prepare(config: SimConfig):
    sys_ = config.system
    T = config.horizon
    chain = _general_chain(config.chain, sys_.C)
    beliefs = sys_.initial_beliefs or tuple(BeliefVec.uniform(sys_.C) for _ in range(sys_.M))
    init = np.ascontiguousarray(belief_matrix(beliefs, sys_.C))
    schedule = np.zeros((T, sys_.K), dtype=np.int64)
    mode, score = 0, None
    if config.policy == "rr":
        rr = build_rr_schedule(1.0 - init[:, 0], sys_.K)
        schedule = rr.table(T)
        mode = 1
    elif config.policy == "custom":
        acts = [tuple(sorted(a)) for a in config.custom_actions]
        if len(acts) < T or any(len(a) != sys_.K for a in acts):
            raise DomainError(f"custom actions must give K={sys_.K} nodes for each of {T} slots")
        schedule = np.array(acts[:T], dtype=np.int64)
        if schedule.min() < 0 or schedule.max() >= sys_.M:
            raise DomainError("custom action names a node out of range")
        mode = 1
    elif config.policy == "whittle":
        chain_c1 = config.chain if isinstance(config.chain, ChainC1) else config.chain.to_c1()
        score = _whittle_score(chain_c1, sys_.beta)
        mode = 2
    kbeta = 1.0 if config.criterion == "average" else sys_.beta
    arrays = dict(
        P_active=np.ascontiguousarray(chain.P_active, dtype=float),
        P_passive=np.ascontiguousarray(chain.P_passive, dtype=float),
        cum_active=_cum_rows(chain.P_active),
        cum_passive=_cum_rows(chain.P_passive),
        init_belief=init,
        init_cum=_cum_rows(init),
    )
    return T, arrays, mode, np.ascontiguousarray(schedule), score, kbeta


def _backend(config: SimConfig, mode: int):
    if mode == 2 or config.backend == "python":
        return _kernels_py, "python"
    if config.backend == "compiled":
        if kernels.compiled_backend is None:
            raise DomainError("compiled backend requested but the extension is not available")
        return kernels.compiled_backend, "compiled"
    return (kernels.compiled_backend, "compiled") if kernels.BACKEND == "compiled" else (_kernels_py, "python")


def simulate(config: SimConfig) -> ThroughputReport:
    """Mean (discounted or average) throughput over ``R`` seeded replications."""
    sys_ = config.system
    T, arrays, mode, schedule, score, kbeta = _prepare(config)
    module, name = _backend(config, mode)
    R, M = config.replications, sys_.M
    cs = chunk_size(T, M)
    totals = np.empty(R)
    slot_sums = np.zeros(T)
    for c in range((R + cs - 1) // cs):
        lo, hi = c * cs, min(R, (c + 1) * cs)
        u = chunk_uniforms(config.seed, c, hi - lo, T, M)
        args = (
            arrays["P_active"],
            arrays["P_passive"],
            arrays["cum_active"],
            arrays["cum_passive"],
            arrays["init_belief"],
            arrays["init_cum"],
            u,
            sys_.K,
            kbeta,
            mode,
            schedule,
        )
        if module is _kernels_py:
            tot, ss = module.simulate_chunk(*args, score_fn=score)
        else:
            tot, ss = module.simulate_chunk(*args)
        totals[lo:hi] = tot
        slot_sums += ss
    if config.criterion == "average":
        totals = totals / T
    mean = float(np.mean(totals))
    if R > 1 and np.any(totals != totals[0]):
        stderr = float(np.std(totals, ddof=1) / math.sqrt(R))
    else:
        # np.std of identical values can come out at 1e-16, report zero
        stderr = 0.0
    if config.criterion == "average":
        ideal = float(sys_.K)
        bias = 0.0
    elif sys_.horizon is None:
        ideal = sys_.K / (1.0 - sys_.beta)
        bias = sys_.K * sys_.beta**T / (1.0 - sys_.beta)
    else:
        ideal = sys_.K * geometric_sum(sys_.beta, T)
        bias = 0.0
    return ThroughputReport(
        mean=mean,
        normalized=mean / ideal,
        stderr=stderr,
        replications=R,
        seed=config.seed,
        T=T,
        criterion=config.criterion,
        truncation_bias=bias,
        backend=name,
        slot_means=slot_sums / R,
        totals=totals,
    )


def simulate_paths(config: SimConfig, replications: Optional[int] = None) -> dict:
    """Trajectories of beliefs, true states and actions (pure-Python path).

    Arrays are indexed ``[replication, slot, node, ...]`` with the belief
    taken before the slot's decision.
    """
    sys_ = config.system
    T, arrays, mode, schedule, score, kbeta = _prepare(config)
    R = replications or config.replications
    cs = chunk_size(T, sys_.M)
    parts = []
    for c in range((R + cs - 1) // cs):
        lo, hi = c * cs, min(R, (c + 1) * cs)
        u = chunk_uniforms(config.seed, c, hi - lo, T, sys_.M)
        _, _, trace = _kernels_py.simulate_chunk(
            arrays["P_active"],
            arrays["P_passive"],
            arrays["cum_active"],
            arrays["cum_passive"],
            arrays["init_belief"],
            arrays["init_cum"],
            u,
            sys_.K,
            kbeta,
            mode,
            schedule,
            score_fn=score,
            record=True,
        )
        parts.append(trace)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# --------------------------------------------------------------------------
# exact evaluation (capacity one)
# --------------------------------------------------------------------------


def myopic_rule(K: int) -> Callable:
    return lambda beliefs, t: myopic_action(beliefs, K).nodes


def schedule_rule(schedule) -> Callable:
    return lambda beliefs, t: schedule.group_at(t)


def evaluate_policy_exact_c1(
    initial_beliefs: Sequence[float],
    action_rule: Callable,
    T: int,
    beta: float,
    chain: ChainC1,
    leaf_budget: int = LEAF_BUDGET,
) -> float:
    """Expected discounted throughput of ``action_rule`` by full tree expansion.

    ``action_rule(beliefs, t)`` returns the scheduled node indices at slot
    ``t`` (1-based). Every observation outcome of the scheduled nodes is
    expanded, so the result is exact.
    """
    if T < 1:
        raise DomainError("T must be >= 1")
    leaves = [0]

    def value(t, omegas):
        U = tuple(action_rule(tuple(omegas), t))
        reward = sum(omegas[i] for i in U)
        if t == T:
            leaves[0] += 1
            if leaves[0] > leaf_budget:
                raise BudgetExceeded(f"observation tree exceeds {leaf_budget} leaves", leaves=leaves[0])
            return reward
        nxt = [tau0_1(w, chain) for w in omegas]
        branches = [belief_update_scheduled_c1(omegas[i], chain) for i in U]
        cont = 0.0
        for combo in itertools.product(*branches):
            prob = 1.0
            for i, (w, p) in zip(U, combo):
                nxt[i] = w
                prob *= p
            cont += prob * value(t + 1, list(nxt))
        return reward + beta * cont

    return value(1, [float(w) for w in initial_beliefs])
