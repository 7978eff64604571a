"""Command line entry point: ``rmabsched <subcommand> --config file.json``.

Every subcommand writes a CSV whose leading ``#`` lines carry the build id,
the resolved configuration and the master seed, followed by a header row.
Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 resource budget exceeded.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    STUDY_CHAIN_DEFAULTS,
    BeliefVec,
    ChainC1,
    ChainGeneral,
    DomainError,
    SystemConfig,
    study_chain,
    validate_assumptions,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

STUDY_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 20240601,
    "fig6": {
        "K": 3,
        "beta": 0.95,
        "C": [1, 2, 3, 4, 5, 6],
        "M_over_K": [1, 3, 10],
        "replications": 20000,
        "G": None,
        "chain": dict(STUDY_CHAIN_DEFAULTS),
    },
}


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "{:.12g}".format(x)
    if x is None:
        return ""
    return str(x)


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_csv(out, config: dict, seed, header, rows):
    buf = io.StringIO()
    buf.write(f"# build: {build_id()}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    buf.write(f"# seed: {fmt(seed)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    return cfg


def parse_chain(section: dict):
    if not isinstance(section, dict):
        raise ConfigError("'chain' must be an object")
    section = dict(section)
    C = int(section.pop("capacity", 1))
    if section.pop("study", False):
        return study_chain(C, **section)
    if "P_passive" in section or "P_active" in section:
        return ChainGeneral(C, np.array(section["P_passive"]), np.array(section["P_active"]))
    if C != 1:
        raise ConfigError("a C > 1 chain needs P_passive/P_active matrices or study: true")
    keys = ("p01_passive", "p11_passive", "p01_active", "p11_active")
    missing = [k for k in keys if k not in section]
    if missing:
        raise ConfigError(f"chain is missing {missing}")
    return ChainC1(*(float(section[k]) for k in keys))


def parse_system(section: dict, C: int) -> SystemConfig:
    if not isinstance(section, dict):
        raise ConfigError("'system' must be an object")
    M, K = int(section["M"]), int(section["K"])
    beliefs = section.get("initial_beliefs", "uniform")
    if beliefs == "uniform":
        beliefs = tuple(BeliefVec.uniform(C) for _ in range(M)) if C > 1 else tuple([0.5] * M)
    elif C > 1:
        beliefs = tuple(BeliefVec(b) for b in beliefs)
    return SystemConfig(
        M=M,
        K=K,
        C=C,
        beta=float(section.get("beta", 1.0)),
        horizon=section.get("horizon"),
        initial_beliefs=tuple(beliefs),
    )


def _capacity(chain) -> int:
    return chain.capacity if isinstance(chain, ChainGeneral) else 1


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def run_validate(cfg, args):
    chain = parse_chain(cfg["chain"])
    sys_section = cfg.get("system", {})
    M, K = int(sys_section.get("M", 1)), int(sys_section.get("K", 1))
    if isinstance(chain, ChainGeneral) and chain.capacity > 1:
        rows = [("capacity", chain.capacity, "admitted; ordering check applies to capacity one only")]
        rows.append(("integer_ratio", M % K == 0 if K else False, f"M/K={M}/{K}"))
        write_csv(args.out, cfg, args.seed, ["check", "holds", "detail"], rows)
        return EXIT_OK
    c1 = chain.to_c1() if isinstance(chain, ChainGeneral) else chain
    report = validate_assumptions(c1, M, K)
    rows = [
        ("integer_ratio", report.integer_ratio_holds, f"M/K={M}/{K}"),
        ("chain_ordering", report.ordering_holds, "; ".join(report.offending) or "ok"),
    ]
    write_csv(args.out, cfg, args.seed, ["check", "holds", "detail"], rows)
    for line in report.offending:
        print(f"violated: {line}", file=sys.stderr)
    return EXIT_OK if report.ordering_holds else EXIT_FAIL


def random_ordered_chain(rng) -> ChainC1:
    """Random chain with ``p11_active <= p01_active <= p01_passive <= p11_passive``."""
    a, b, c, d = np.sort(rng.random(4))
    return ChainC1(p01_passive=c, p11_passive=d, p01_active=b, p11_active=a)


def dp_instances(opts: dict, seed: int):
    rng = np.random.default_rng(seed)
    n = int(opts.get("instances", 100))
    Ms = opts.get("M", [2, 3, 4])
    Ks = opts.get("K", [1, 2])
    T_lo, T_hi = opts.get("T", [1, 5])
    betas = opts.get("beta", [0.5, 0.9, 1.0])
    pairs = [(M, K) for M in Ms for K in Ks if K <= M and M % K == 0]
    out = []
    for _ in range(n):
        M, K = pairs[rng.integers(len(pairs))]
        T = int(rng.integers(T_lo, T_hi + 1))
        beta = float(betas[rng.integers(len(betas))])
        chain = random_ordered_chain(rng)
        beliefs = tuple(float(x) for x in rng.random(M))
        out.append((M, K, T, beta, chain, beliefs))
    return out


def run_dp_verify(cfg, args):
    from .exact_dp import STATE_BUDGET, BudgetExceeded, certify_mp_optimality

    opts = cfg.get("dp_verify", {})
    budget = args.budget or int(opts.get("state_budget", STATE_BUDGET))
    tol = float(opts.get("tolerance", 1e-9))
    rows, failed = [], False
    for idx, (M, K, T, beta, chain, beliefs) in enumerate(dp_instances(opts, args.seed)):
        system = SystemConfig(M=M, K=K, beta=beta, horizon=T, initial_beliefs=beliefs)
        base = [idx, M, K, T, beta, chain.p01_passive, chain.p11_passive, chain.p01_active, chain.p11_active]
        try:
            cert = certify_mp_optimality(system, chain, state_budget=budget)
        except BudgetExceeded:
            rows.append(base + [None, None, None, "budget_exceeded"])
            continue
        ok = abs(cert.gap) <= tol
        failed |= not ok
        rows.append(base + [cert.v_mp, cert.v_star, cert.gap, "ok" if ok else "fail"])
    header = ["instance", "M", "K", "T", "beta", "p01_passive", "p11_passive", "p01_active", "p11_active",
              "V_MP", "V_star", "gap", "status"]
    write_csv(args.out, cfg, args.seed, header, rows)
    return EXIT_FAIL if failed else EXIT_OK


def run_mp_sim(cfg, args):
    from .montecarlo import SimConfig, simulate

    chain = parse_chain(cfg["chain"])
    system = parse_system(cfg["system"], _capacity(chain))
    opts = cfg.get("mp_sim", {})
    sim = SimConfig(
        system=system,
        chain=chain,
        policy=opts.get("policy", "myopic"),
        replications=int(opts.get("replications", 10000)),
        seed=args.seed,
        T_eff=opts.get("T_eff"),
        criterion=opts.get("criterion", "discounted"),
    )
    rep = simulate(sim)
    header = ["policy", "C", "M", "K", "beta", "mean", "stderr", "normalized", "seed", "T_eff", "truncation_bias"]
    row = [sim.policy, system.C, system.M, system.K, system.beta, rep.mean, rep.stderr, rep.normalized,
           args.seed, rep.T, rep.truncation_bias]
    write_csv(args.out, cfg, args.seed, header, [row])
    return EXIT_OK


def run_whittle(cfg, args):
    from .rsab_whittle import whittle_index_closed, whittle_index_numeric

    opts = cfg.get("whittle", {})
    step = float(opts.get("omega_step", 0.05))
    tol = float(opts.get("tolerance", 1e-6))
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    rows, failed = [], False
    for p in _as_list(opts.get("p01", [0.1, 0.3, 0.5, 0.8])):
        for beta in _as_list(opts.get("beta", [0.5, 0.9, 0.99])):
            prev = -math.inf
            for w in grid:
                wc = whittle_index_closed(float(w), float(p), float(beta))
                wn = whittle_index_numeric(float(w), float(p), float(beta))
                diff = abs(wc - wn)
                mono = wn >= prev - 1e-9
                prev = wn
                ok = diff <= tol and mono
                failed |= not ok
                rows.append([p, beta, float(w), wc, wn, diff, "ok" if ok else "fail"])
    write_csv(args.out, cfg, args.seed, ["p01", "beta", "omega", "W_closed", "W_numeric", "abs_diff", "status"], rows)
    return EXIT_FAIL if failed else EXIT_OK


def run_indexability(cfg, args):
    from .rsab_whittle import indexability_scan

    opts = cfg.get("indexability", {})
    g = opts.get("m_grid", {})
    m_grid = np.linspace(float(g.get("start", -0.1)), float(g.get("stop", 1.1)), int(g.get("num", 101)))
    rows, failed = [], False
    for p in _as_list(opts.get("p01", [0.1, 0.5, 0.9])):
        for beta in _as_list(opts.get("beta", [0.5, 0.9])):
            rep = indexability_scan(float(p), float(beta), m_grid)
            failed |= not rep.ok
            rows.append([p, beta, rep.inclusion_ok, rep.empty_below_zero, rep.full_above_one,
                         rep.thresholds_monotone, rep.threshold_structure, "ok" if rep.ok else "fail"])
            for f in rep.failures:
                print(f"p01={p} beta={beta}: {f}", file=sys.stderr)
    header = ["p01", "beta", "inclusion", "empty_below_zero", "full_above_one", "threshold_monotone",
              "threshold_structure", "status"]
    write_csv(args.out, cfg, args.seed, header, rows)
    return EXIT_FAIL if failed else EXIT_OK


def _bound_row(chain, initial, system, G, budget):
    from .relaxed_bound import build_reachable_graph, upper_bound_throughput

    if budget:
        # size check up front so an oversized graph fails fast
        build_reachable_graph(chain, initial, G or _default_G(system.beta), state_budget=budget)
    return upper_bound_throughput(chain, initial, system, G)


def _default_G(beta):
    from .relaxed_bound import default_gap_cap

    return default_gap_cap(beta)


def run_upper_bound(cfg, args):
    chain = parse_chain(cfg["chain"])
    if isinstance(chain, ChainC1):
        chain = chain.to_general()
    system = parse_system(cfg["system"], chain.capacity)
    opts = cfg.get("upper_bound", {})
    first = system.initial_beliefs[0]
    initial = first if isinstance(first, BeliefVec) else BeliefVec.from_scalar(first)
    if any(b != first for b in system.initial_beliefs):
        raise ConfigError("the relaxed bound needs identical initial beliefs for all nodes")
    rep = _bound_row(chain, initial, system, opts.get("G"), args.budget)
    header = ["C", "M_over_K", "bound", "normalized_bound", "G", "lp_status", "bound_2G", "lagrangian_bound"]
    lag = None if rep.lagrangian_per_arm is None else system.M * rep.lagrangian_per_arm
    row = [chain.capacity, system.M / system.K, rep.bound, rep.normalized, rep.G, rep.status, rep.bound_2G, lag]
    write_csv(args.out, cfg, args.seed, header, [row])
    return EXIT_OK if rep.status == "optimal" else EXIT_FAIL


def run_fig6(cfg, args):
    from .montecarlo import SimConfig, simulate
    from .relaxed_bound import upper_bound_throughput

    opts = copy.deepcopy(STUDY_CONFIG["fig6"])
    opts.update(cfg.get("fig6", {}))
    K, beta = int(opts["K"]), float(opts["beta"])
    R = int(opts["replications"])
    overrides = dict(opts.get("chain") or {})
    rows, failed = [], False
    for C in opts["C"]:
        chain = study_chain(int(C), **overrides)
        initial = BeliefVec.uniform(int(C))
        for ratio in opts["M_over_K"]:
            M = int(ratio) * K
            system = SystemConfig(M=M, K=K, C=int(C), beta=beta, initial_beliefs=(initial,) * M)
            rep = simulate(SimConfig(system, chain, "myopic", R, args.seed))
            ub = upper_bound_throughput(chain, initial, system, opts.get("G"))
            ideal = K / (1.0 - beta)
            half = 3.0 * rep.stderr
            bound_ok = ub.status == "optimal" and ub.bound >= rep.mean - half
            range_ok = all(0.0 <= v <= 1.0 + 1e-8 for v in (rep.normalized, ub.normalized))
            ok = bound_ok and range_ok
            failed |= not ok
            rows.append([C, ratio, rep.mean, rep.stderr, rep.normalized, ub.bound, ub.normalized,
                         ub.normalized - rep.normalized, half / ideal, ub.G, ub.status, ub.bound_2G,
                         "ok" if ok else "fail"])
    header = ["C", "M_over_K", "mp_mean", "mp_stderr", "mp_normalized", "bound", "normalized_bound",
              "normalized_gap", "normalized_half_width", "G", "lp_status", "bound_2G", "status"]
    write_csv(args.out, {**cfg, "fig6": opts}, args.seed, header, rows)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "validate": run_validate,
    "dp-verify": run_dp_verify,
    "mp-sim": run_mp_sim,
    "whittle": run_whittle,
    "indexability": run_indexability,
    "upper-bound": run_upper_bound,
    "fig6": run_fig6,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmabsched", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "fig6", help="JSON config file")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--budget", type=int, help="state budget for the exact solvers")
    return ap


def main(argv=None) -> int:
    from .exact_dp import BudgetExceeded
    from .relaxed_bound import StateBudgetExceeded

    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else copy.deepcopy(STUDY_CONFIG)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        cfg["seed"] = args.seed
        return COMMANDS[args.command](cfg, args)
    except (BudgetExceeded, StateBudgetExceeded) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, DomainError, KeyError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
