"""The ten acceptance criteria, each at its stated tolerance.

Every test appends one ``criterion N: PASS|FAIL - detail`` line, printed
at the end of the pytest run. Run this file directly for just the gate:
``python3 tests/test_acceptance.py``.
"""
import csv
import sys
import time

import numpy as np
import pytest

import conftest
from oracles import random_ordered_chain, rr_chooser, tree_value, vertex_enumeration
from rmabsched import cli
from rmabsched.chain import SystemConfig
from rmabsched.exact_dp import certify_mp_optimality
from rmabsched.montecarlo import SimConfig, effective_horizon, simulate
from rmabsched.policies import build_rr_schedule, rr_throughput, theta_H
from rmabsched.rsab_whittle import (
    indexability_scan,
    is_threshold_rule,
    extreme_ordering_check,
    passive_mask,
    belief_grid,
    SubsidyProblem,
    whittle_index_closed,
    whittle_index_numeric,
)
from rmabsched.simplex import LpProblem, simplex_solve

P_GRID = (0.1, 0.5, 0.9)
BETA_GRID = (0.5, 0.9)


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_myopic_optimality():
    start = time.perf_counter()
    worst, n = 0.0, 0
    for M, K, T, beta, chain, beliefs in cli.dp_instances({"instances": 100}, seed=20240601):
        cfg = SystemConfig(M=M, K=K, beta=beta, horizon=T, initial_beliefs=beliefs)
        worst = max(worst, abs(certify_mp_optimality(cfg, chain).gap))
        n += 1
    elapsed = time.perf_counter() - start
    record(1, n == 100 and worst <= 1e-9 and elapsed < 120,
           f"{n} instances, max |V_MP - V*| = {worst:.2e}, {elapsed:.1f} s")


def test_criterion_02_rr_closed_form():
    rng = np.random.default_rng(2)
    worst, n = 0.0, 0
    for M in (1, 2, 3, 4):
        for K in [k for k in range(1, M + 1) if M % k == 0]:
            for T in range(1, 7):
                for _ in range(4):
                    ch = random_ordered_chain(rng)
                    beta = float(rng.choice([0.5, 0.9, 1.0]))
                    w = list(rng.random(M))
                    s = build_rr_schedule(w, K)
                    exact = tree_value(w, rr_chooser(s.node_order, K), T, beta, ch)
                    worst = max(worst, abs(rr_throughput(w, s, T, beta, ch) - exact))
                    n += 1
    h1 = all(theta_H(w, 1, b, random_ordered_chain(rng), 3) == w for w in rng.random(50) for b in (0.5, 1.0))
    record(2, worst <= 1e-9 and h1, f"{n} instances, max error {worst:.2e}, theta(H=1) = omega exactly: {h1}")


def test_criterion_03_adjacent_swap():
    rng = np.random.default_rng(3)
    worst = np.inf
    for _ in range(1000):
        M = int(rng.integers(2, 9))
        K = int(rng.choice([k for k in range(1, M + 1) if M % k == 0]))
        T = int(rng.integers(1, 9))
        beta = float(rng.choice([0.5, 0.9, 1.0]))
        ch = random_ordered_chain(rng)
        w = list(rng.random(M))
        j = int(rng.integers(0, M - 1))
        if w[j] < w[j + 1]:
            w[j], w[j + 1] = w[j + 1], w[j]
        swapped = list(w)
        swapped[j], swapped[j + 1] = w[j + 1], w[j]
        ident = build_rr_schedule(w, K, sort=False)
        worst = min(worst, rr_throughput(w, ident, T, beta, ch) - rr_throughput(swapped, ident, T, beta, ch))
    record(3, worst >= -1e-12, f"1000 instances, min(ordered - swapped) = {worst:.2e}")


def test_criterion_04_whittle_closed_form():
    grid = np.round(np.arange(21) * 0.05, 10)
    worst, monotone, n = 0.0, True, 0
    for p in (0.1, 0.3, 0.5, 0.8):
        for beta in (0.5, 0.9, 0.99):
            prev = -np.inf
            for w in grid:
                wn = whittle_index_numeric(float(w), p, beta)
                worst = max(worst, abs(whittle_index_closed(float(w), p, beta) - wn))
                monotone &= wn >= prev
                prev = wn
                n += 1
    record(4, worst <= 1e-6 and monotone, f"{n} points, max |closed - numeric| = {worst:.2e}, numeric monotone: {monotone}")


def test_criterion_05_indexability():
    m_grid = np.linspace(-0.1, 1.1, 101)
    failures = []
    for p in P_GRID:
        for beta in BETA_GRID:
            rep = indexability_scan(p, beta, m_grid)
            ok = rep.inclusion_ok and rep.empty_below_zero and rep.full_above_one and rep.thresholds_monotone
            if not ok:
                failures.append((p, beta, rep.failures))
    record(5, not failures, f"{len(P_GRID) * len(BETA_GRID)} (p01, beta) pairs on a 101-point subsidy grid, failures: {failures or 'none'}")


def test_criterion_06_extreme_orderings():
    samples = [-0.5, -0.1, -1e-3, 0.0, 0.3, 0.7, 0.999, 1.0, 1.5, 3.0]
    bad, n = [], 0
    for p in P_GRID:
        for beta in BETA_GRID:
            rep = extreme_ordering_check(p, beta, samples, slack=1e-9)
            n += len(rep.rows)
            bad += [(p, beta) + tuple(r[:2]) for r in rep.rows if not r[-1]]
    record(6, not bad, f"{n} inequalities across all subsidy regimes, violated: {bad or 'none'}")


def test_criterion_07_threshold_structure():
    bad, n = [], 0
    for p in P_GRID:
        for beta in BETA_GRID:
            grid = belief_grid(p, beta)
            for m in np.linspace(0.0, 0.99, 34):
                if not is_threshold_rule(passive_mask(grid, SubsidyProblem(p, beta, float(m)))):
                    bad.append((p, beta, m))
                n += 1
    record(7, not bad, f"{n} (p01, beta, m) cases, active-passive-active patterns: {bad or 'none'}")


def test_criterion_08_fig6(tmp_path):
    start = time.perf_counter()
    out = tmp_path / "fig6.csv"
    code = cli.main(["fig6", "--out", str(out)])
    elapsed = time.perf_counter() - start
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.DictReader(lines))
    K, beta = 3, 0.95
    ideal = K / (1 - beta)
    a = all(r["lp_status"] == "optimal" and float(r["bound"]) >= float(r["mp_mean"]) - 3 * float(r["mp_stderr"]) for r in rows)
    gap = {(r["C"], r["M_over_K"]): float(r["normalized_bound"]) - float(r["mp_normalized"]) for r in rows}
    b = gap[("1", "1")] < gap[("6", "10")]
    c = all(0.0 <= float(r[k]) <= 1 + 1e-8 for r in rows for k in ("mp_normalized", "normalized_bound"))
    for r in rows:
        print(f"  C={r['C']} M/K={r['M_over_K']}: MP {float(r['mp_normalized']):.4f} bound {float(r['normalized_bound']):.4f}")
    ok = code == 0 and len(rows) == 18 and a and b and c and elapsed < 900
    record(8, ok, f"18 points: bound >= MP - 3se: {a}; gap(1,1) = {gap[('1', '1')]:.4f} < gap(6,10) = "
                  f"{gap[('6', '10')]:.4f}: {b}; normalized in range: {c}; {elapsed:.0f} s")


def test_criterion_09_simulator_calibration():
    rng = np.random.default_rng(9)
    worst, n = 0.0, 0
    for _ in range(20):
        M = int(rng.choice([2, 3, 4, 6]))
        K = int(rng.choice([k for k in range(1, M + 1) if M % k == 0]))
        beta = float(rng.choice([0.5, 0.8, 0.9]))
        ch = random_ordered_chain(rng)
        w = tuple(float(x) for x in rng.random(M))
        sys_ = SystemConfig(M=M, K=K, beta=beta, initial_beliefs=w)
        rep = simulate(SimConfig(sys_, ch, policy="rr", replications=100_000, seed=int(rng.integers(2**31))))
        T = effective_horizon(beta)
        exact = rr_throughput(w, build_rr_schedule(w, K), T, beta, ch)
        worst = max(worst, abs(rep.mean - exact) / rep.stderr)
        n += 1
    record(9, worst <= 4.0, f"{n} instances at R=1e5, max |MC - closed form| = {worst:.2f} standard errors")


def test_criterion_10_lp_solver():
    rng = np.random.default_rng(10)
    worst, n, infeasible_agree = 0.0, 0, True
    while n < 50:
        m, nv = int(rng.integers(1, 4)), int(rng.integers(3, 7))
        A = rng.integers(-3, 4, size=(m, nv)).astype(float)
        b = A @ (rng.random(nv) * (rng.random(nv) < 0.6)) if rng.random() < 0.9 else rng.normal(size=m)
        A = np.hstack([np.vstack([A, np.ones(nv)]), np.eye(m + 1)[:, [-1]]])  # bounded, <= 8 variables
        b = np.append(b, 3.0)
        c = np.append(rng.normal(size=nv), 0.0)
        if np.linalg.matrix_rank(A) < A.shape[0]:
            continue
        best, _ = vertex_enumeration(c, A, b)
        sol = simplex_solve(LpProblem(c, A, b))
        if best is None:
            infeasible_agree &= sol.status == "infeasible"
        else:
            worst = max(worst, abs(sol.value - best) if sol.status == "optimal" else np.inf)
        n += 1
    record(10, worst <= 1e-8 and infeasible_agree, f"{n} LPs, max |simplex - vertex enumeration| = {worst:.2e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
