"""Wall-clock comparison of the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--replications N] [--repeat K]

Both backends are fed the same inputs; the script also checks that their
outputs are identical before reporting timings.
"""
import argparse
import time

import numpy as np

from rmabsched import _kernels_py, kernels
from rmabsched.chain import BeliefVec, study_chain
from rmabsched.montecarlo import _cum_rows, chunk_uniforms, effective_horizon


def sim_inputs(C, M, K, R, beta, seed=0):
    ch = study_chain(C)
    T = effective_horizon(beta)
    init = np.tile(BeliefVec.uniform(C).probs, (M, 1))
    u = chunk_uniforms(seed, 0, R, T, M)
    args = (
        np.ascontiguousarray(ch.P_active),
        np.ascontiguousarray(ch.P_passive),
        _cum_rows(ch.P_active),
        _cum_rows(ch.P_passive),
        init,
        _cum_rows(init),
        u,
        K,
        beta,
        0,
        np.zeros((T, K), dtype=np.int64),
    )
    return args


def vi_inputs(p=0.05, beta=0.99):
    n = 3000
    states = 1.0 - (1.0 - p) ** np.arange(n)
    nxt = np.minimum(np.arange(n) + 1, n - 1).astype(np.int64)
    return (states, nxt, 0, 1, 0.5, beta, 1e-12, 10**6)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replications", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not built; nothing to compare")
    fast, slow = kernels.compiled_backend, _kernels_py

    print(f"{'kernel':<34}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for C, M in [(1, 3), (3, 9), (6, 30)]:
        inp = sim_inputs(C, M, 3, args.replications, 0.95)
        tf, of = best_of(fast.simulate_chunk, inp, args.repeat)
        ts, os_ = best_of(slow.simulate_chunk, inp, args.repeat)
        assert np.array_equal(of[0], os_[0]), "backends disagree"
        name = f"simulate C={C} M={M} R={args.replications}"
        print(f"{name:<34}{tf:>14.4f}{ts:>14.4f}{ts / tf:>9.1f}x")
    inp = vi_inputs()
    tf, of = best_of(fast.subsidy_value_iteration, inp, args.repeat)
    ts, os_ = best_of(slow.subsidy_value_iteration, inp, args.repeat)
    assert np.array_equal(of[0], os_[0]), "backends disagree"
    print(f"{'value iteration n=3000 beta=0.99':<34}{tf:>14.4f}{ts:>14.4f}{ts / tf:>9.1f}x")


if __name__ == "__main__":
    main()
