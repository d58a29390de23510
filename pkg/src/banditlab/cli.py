"""Command-line front end.

Exit codes: 0 success, 1 config/validation error, 2 runtime or solver
failure, 3 verification failure (invariants, oracle check).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

from .checks import ORACLE_TOL, invariant_suite, oracle_check
from .config import apply_overrides, grid_cells, load_raw, parse_config
from .core import BanditLabError, ConfigError
from .harness import AggregateResult, ExperimentConfig, resolve_threads, run_batch, theoretical_bound

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

SUMMARY_COLUMNS = [
    "env", "learner", "N", "C", "K", "T", "s", "eta", "nu", "epsilon", "repeats",
    "mean_regret", "std_regret", "bound_sparse", "bound_exp4", "bound_min",
    "max_stability_ratio", "min_action_prob", "wallclock_s",
    "mean_pseudo_regret", "std_pseudo_regret",
]
TRACE_COLUMNS = [
    "run", "seed", "round", "context", "policy_chosen", "action", "observed_loss",
    "action_prob", "stability_ratio", "realized_regret",
]
ORACLE_COLUMNS = ["trial", "N", "eta", "nu", "epsilon", "max_deviation"]
BOUND_COLUMNS = ["N", "K", "T", "s", "bound_sparse", "bound_exp4", "bound_min"]

DEFAULT_INVARIANT_CONFIG = {
    "version": 1,
    "env": {"type": "hard", "C": 2, "K": 4, "target": [0, 1]},
    "learner": "lbftrl",
    "T": 2000,
    "repeats": 20,
    "seed": 0,
}


def fmt(v) -> str:
    """CSV cell: floats with 17 significant digits (round-trip exact), None as empty."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return format(v, ".17g")
    return str(v)


def write_csv(path: str | Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])


def summary_row(cfg: ExperimentConfig, agg: AggregateResult, wallclock: float | None) -> dict:
    env = cfg.build_environment()
    table = env.policy_table
    N, C, K = table.num_policies, table.num_contexts, table.num_actions
    sparse, exp4, best = theoretical_bound(N, K, cfg.T, cfg.s)
    params = agg.runs[0].params
    pseudo = agg.per_seed_pseudo_regret
    return {
        "env": env.name, "learner": cfg.learner, "N": N, "C": C, "K": K, "T": cfg.T, "s": float(cfg.s),
        "eta": params.get("eta"), "nu": params.get("nu"), "epsilon": params.get("epsilon"),
        "repeats": cfg.repeats,
        "mean_regret": agg.mean_regret, "std_regret": agg.std_regret,
        "bound_sparse": sparse, "bound_exp4": exp4, "bound_min": best,
        "max_stability_ratio": agg.max_stability_ratio, "min_action_prob": agg.min_action_prob,
        "wallclock_s": wallclock,
        "mean_pseudo_regret": agg.mean_pseudo_regret,
        "std_pseudo_regret": None if pseudo is None else (float(pseudo.std(ddof=1)) if pseudo.size > 1 else 0.0),
    }


def trace_rows(agg: AggregateResult) -> list[dict]:
    rows = []
    for k, run in enumerate(agg.runs):
        for rec, regret in zip(run.per_round, run.regret_trace):
            rows.append({
                "run": k, "seed": run.seed, "round": rec.round, "context": rec.context,
                "policy_chosen": rec.policy_chosen, "action": rec.action,
                "observed_loss": rec.observed_loss, "action_prob": rec.action_prob,
                "stability_ratio": rec.stability_ratio, "realized_regret": float(regret),
            })
    return rows


def trace_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".trace" + (out.suffix or ".csv"))


def _load(args) -> tuple[dict, ExperimentConfig]:
    raw = apply_overrides(load_raw(args.config), args.set or [])
    if args.seed is not None:
        raw["seed"] = args.seed
    return raw, parse_config({k: v for k, v in raw.items() if k != "grid"})


def _execute(cfg: ExperimentConfig, threads: int, timing: bool) -> tuple[AggregateResult, float | None]:
    t0 = time.perf_counter()
    agg = run_batch(cfg, threads)
    return agg, (time.perf_counter() - t0 if timing else None)


def cmd_run(args) -> int:
    _, cfg = _load(args)
    agg, wall = _execute(cfg, resolve_threads(args.threads), args.timing)
    write_csv(args.out, SUMMARY_COLUMNS, [summary_row(cfg, agg, wall)])
    if cfg.record_full_trace:
        write_csv(trace_path(args.out), TRACE_COLUMNS, trace_rows(agg))
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw, _ = _load(args)
    cells = [parse_config(c) for c in grid_cells(raw)]  # validate every cell before running any
    threads = resolve_threads(args.threads)
    rows = []
    for cfg in cells:
        agg, wall = _execute(cfg, threads, args.timing)
        rows.append(summary_row(cfg, agg, wall))
    write_csv(args.out, SUMMARY_COLUMNS, rows)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.trials < 0:
        raise ConfigError("--trials must be >= 0")
    rows = oracle_check(args.trials, args.seed or 0, args.oracle_iters)
    write_csv(args.out, ORACLE_COLUMNS, rows)
    bad = [r for r in rows if r["max_deviation"] > ORACLE_TOL]
    print(f"oracle check: {len(rows) - len(bad)}/{len(rows)} trials within {ORACLE_TOL:g}")
    return EXIT_VERIFY if bad else EXIT_OK


def cmd_invariants(args) -> int:
    if args.config:
        _, cfg = _load(args)
    else:
        raw = apply_overrides(DEFAULT_INVARIANT_CONFIG, args.set or [])
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = parse_config(raw)
    results = invariant_suite(cfg, seed=cfg.base_seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def cmd_bound_table(args) -> int:
    rows = []
    for N in args.N:
        for K in args.K:
            for T in args.T:
                for s in args.s:
                    if N < 1 or K < 1 or T < 1 or s < 0:
                        raise ConfigError("bound-table needs N, K, T >= 1 and s >= 0")
                    sp, e4, mn = theoretical_bound(N, K, T, s)
                    rows.append({"N": N, "K": K, "T": T, "s": float(s),
                                 "bound_sparse": sp, "bound_exp4": e4, "bound_min": mn})
    if args.out:
        write_csv(args.out, BOUND_COLUMNS, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(BOUND_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in BOUND_COLUMNS])
    return EXIT_OK


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditlab", description="Bandit multiclass / sparse contextual bandit lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
        p.add_argument("--seed", type=_u64, help="override the base seed")
        p.add_argument("--threads", type=int, help="worker processes (default: $BANDITLAB_THREADS or 1)")

    p = sub.add_parser("run", help="run one experiment and write a summary CSV")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true", help="fill wallclock_s (makes output non-reproducible)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the config's grid, one CSV row per cell")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="compare the FTRL solver against the brute-force oracle")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--oracle-iters", type=int, default=1_000_000)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("invariants", help="run the runtime invariant suites")
    common(p, config_required=False)
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("bound-table", help="tabulate the theoretical regret bounds")
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--K", type=int, nargs="+", required=True)
    p.add_argument("--T", type=int, nargs="+", required=True)
    p.add_argument("--s", type=float, nargs="+", default=[1.0])
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound_table)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BanditLabError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
