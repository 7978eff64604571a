# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the replication simulator and subsidy value iteration.

Every floating-point expression here is evaluated in the same order as its
twin in ``_kernels_py`` so both backends give bit-identical results.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _sample(const double[:, ::1] cum, Py_ssize_t row, double u, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t y = 0
    while y < n - 1 and not (u < cum[row, y]):
        y += 1
    return y


def simulate_chunk(
    const double[:, ::1] P_active,
    const double[:, ::1] P_passive,
    const double[:, ::1] cum_active,
    const double[:, ::1] cum_passive,
    const double[:, ::1] init_belief,
    const double[:, ::1] init_cum,
    const double[:, :, ::1] uniforms,
    int K,
    double beta,
    int mode,
    const long long[:, ::1] schedule,
):
    """Run ``uniforms.shape[0]`` replications of ``uniforms.shape[1] - 1`` slots.

    ``mode`` 0 is the myopic rule (smallest empty-queue belief first, lower
    index on ties), 1 replays ``schedule[t]``. Returns the per-replication
    discounted totals and the per-slot reward sums over the chunk.
    """
    cdef Py_ssize_t R = uniforms.shape[0]
    cdef Py_ssize_t T = uniforms.shape[1] - 1
    cdef Py_ssize_t M = uniforms.shape[2]
    cdef Py_ssize_t S = P_active.shape[0]
    cdef Py_ssize_t r, t, i, j, k, y, best

    totals_arr = np.zeros(R, dtype=np.float64)
    slot_arr = np.zeros(T, dtype=np.float64)
    belief_arr = np.empty((M, S), dtype=np.float64)
    scratch_arr = np.empty((M, S), dtype=np.float64)
    state_arr = np.empty(M, dtype=np.int64)
    chosen_arr = np.empty(M, dtype=np.int8)
    cdef double[::1] totals = totals_arr
    cdef double[::1] slot_sums = slot_arr
    cdef double[:, ::1] b = belief_arr
    cdef double[:, ::1] nb = scratch_arr
    cdef long long[::1] q = state_arr
    cdef signed char[::1] chosen = chosen_arr
    cdef double disc, total, reward, acc, lo

    with nogil:
        for r in range(R):
            for i in range(M):
                for y in range(S):
                    b[i, y] = init_belief[i, y]
                q[i] = _sample(init_cum, i, uniforms[r, 0, i], S)
            disc = 1.0
            total = 0.0
            for t in range(T):
                for i in range(M):
                    chosen[i] = 0
                if mode == 0:
                    for k in range(K):
                        best = -1
                        lo = 2.0
                        for i in range(M):
                            if chosen[i] == 0 and b[i, 0] < lo:
                                lo = b[i, 0]
                                best = i
                        chosen[best] = 1
                else:
                    for k in range(K):
                        chosen[schedule[t, k]] = 1
                reward = 0.0
                for i in range(M):
                    if chosen[i] and q[i] > 0:
                        reward = reward + 1.0
                # controller beliefs
                for i in range(M):
                    if chosen[i]:
                        for y in range(S):
                            nb[i, y] = P_active[q[i], y]
                    else:
                        for y in range(S):
                            if y > 0:
                                acc = b[i, y - 1] * P_passive[y - 1, y]
                                acc = acc + b[i, y] * P_passive[y, y]
                            else:
                                acc = b[i, y] * P_passive[y, y]
                            if y < S - 1:
                                acc = acc + b[i, y + 1] * P_passive[y + 1, y]
                            nb[i, y] = acc
                for i in range(M):
                    for y in range(S):
                        b[i, y] = nb[i, y]
                # true queues
                for i in range(M):
                    if chosen[i]:
                        q[i] = _sample(cum_active, q[i], uniforms[r, t + 1, i], S)
                    else:
                        q[i] = _sample(cum_passive, q[i], uniforms[r, t + 1, i], S)
                total = total + disc * reward
                disc = disc * beta
                slot_sums[t] = slot_sums[t] + reward
            totals[r] = total
    return totals_arr, slot_arr


def subsidy_value_iteration(
    const double[::1] states,
    const long long[::1] passive_next,
    Py_ssize_t idx_empty,
    Py_ssize_t idx_arrival,
    double subsidy,
    double beta,
    double tol,
    long max_iter,
):
    """Value iteration for the one-arm subsidy problem on an orbit grid.

    Passive pays ``subsidy`` and moves state ``s`` to ``passive_next[s]``;
    active pays ``states[s]`` and moves to ``idx_empty`` w.p. ``states[s]``
    (the queue was served) and to ``idx_arrival`` otherwise. Returns
    ``(V, iterations)``; iteration stops once the sup-norm change is below
    ``tol``.
    """
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t s
    cdef long it = 0
    cdef double q0, q1, w, diff, change
    v_arr = np.zeros(n, dtype=np.float64)
    nv_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] nv = nv_arr
    with nogil:
        while it < max_iter:
            it += 1
            change = 0.0
            for s in range(n):
                w = states[s]
                q0 = subsidy + beta * v[passive_next[s]]
                q1 = w + beta * (w * v[idx_empty] + (1.0 - w) * v[idx_arrival])
                nv[s] = q0 if q0 >= q1 else q1
                diff = nv[s] - v[s]
                if diff < 0.0:
                    diff = -diff
                if diff > change:
                    change = diff
            for s in range(n):
                v[s] = nv[s]
            if change < tol:
                break
    return v_arr, it
