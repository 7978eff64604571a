"""Pure numpy twins of the compiled kernels, vectorized over replications.

The arithmetic mirrors ``_kernels.pyx`` operation for operation; keep the
two in sync.
"""
from __future__ import annotations

import numpy as np


def _sample(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first y with u < cum[y]; the last state catches any rounding shortfall
    return np.sum(u[..., None] >= cum_rows[..., :-1], axis=-1)


def _passive_step(b: np.ndarray, P: np.ndarray) -> np.ndarray:
    S = P.shape[0]
    out = np.empty_like(b)
    for y in range(S):
        if y > 0:
            acc = b[..., y - 1] * P[y - 1, y]
            acc = acc + b[..., y] * P[y, y]
        else:
            acc = b[..., y] * P[y, y]
        if y < S - 1:
            acc = acc + b[..., y + 1] * P[y + 1, y]
        out[..., y] = acc
    return out


def simulate_chunk(
    P_active,
    P_passive,
    cum_active,
    cum_passive,
    init_belief,
    init_cum,
    uniforms,
    K,
    beta,
    mode,
    schedule,
    score_fn=None,
    record=False,
):
    """Same contract as the compiled ``simulate_chunk``.

    Extra knobs only available here: ``mode=2`` ranks nodes by
    ``score_fn(p_nonempty)`` (largest first), and ``record=True`` also
    returns the pre-decision beliefs, true states and actions per slot.
    """
    R, T1, M = uniforms.shape
    T = T1 - 1
    rows = np.arange(R)[:, None]
    b = np.broadcast_to(init_belief, (R,) + init_belief.shape).copy()
    q = _sample(init_cum[None, :, :], uniforms[:, 0, :])
    totals = np.zeros(R)
    slot_sums = np.zeros(T)
    disc = 1.0
    trace = None
    if record:
        trace = {
            "beliefs": np.empty((R, T, M, b.shape[-1])),
            "states": np.empty((R, T, M), dtype=np.int64),
            "actions": np.empty((R, T, M), dtype=bool),
        }
    for t in range(T):
        chosen = np.zeros((R, M), dtype=bool)
        if mode == 0:
            picks = np.argsort(b[:, :, 0], axis=1, kind="stable")[:, :K]
            chosen[rows, picks] = True
        elif mode == 1:
            chosen[:, np.asarray(schedule[t])] = True
        else:
            score = score_fn(1.0 - b[:, :, 0])
            picks = np.argsort(-score, axis=1, kind="stable")[:, :K]
            chosen[rows, picks] = True
        if record:
            trace["beliefs"][:, t] = b
            trace["states"][:, t] = q
            trace["actions"][:, t] = chosen
        reward = np.sum(chosen & (q > 0), axis=1).astype(float)
        nb = _passive_step(b, P_passive)
        nb[chosen] = P_active[q[chosen]]
        b = nb
        q_next = _sample(cum_passive[q], uniforms[:, t + 1, :])
        q_next[chosen] = _sample(cum_active[q[chosen]], uniforms[:, t + 1, :][chosen])
        q = q_next
        totals = totals + disc * reward
        disc = disc * beta
        # rewards are small integers, so the summation order is immaterial
        slot_sums[t] = slot_sums[t] + reward.sum()
    if record:
        return totals, slot_sums, trace
    return totals, slot_sums


def subsidy_value_iteration(states, passive_next, idx_empty, idx_arrival, subsidy, beta, tol, max_iter):
    """Same contract as the compiled ``subsidy_value_iteration``."""
    states = np.asarray(states, dtype=float)
    passive_next = np.asarray(passive_next, dtype=np.int64)
    v = np.zeros(states.size)
    it = 0
    while it < max_iter:
        it += 1
        q0 = subsidy + beta * v[passive_next]
        q1 = states + beta * (states * v[idx_empty] + (1.0 - states) * v[idx_arrival])
        nv = np.where(q0 >= q1, q0, q1)
        change = np.max(np.abs(nv - v)) if nv.size else 0.0
        v = nv
        if change < tol:
            break
    return v, it
