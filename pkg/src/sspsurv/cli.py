"""Command-line interface: hypothesis tests on CSV files, scenario
simulations, and permutation-engine benchmarks.

Every output embeds the package version, master seed, replication plan
and method list, so any run can be reproduced exactly.  Exit codes:
0 success, 2 validation error, 3 I/O error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time as _time

import numpy as np

from . import __version__
from .dataset import DatasetError, load_csv
from .permute import ALL_METHODS, PermutationPlan, run_test_suite
from .simgen import (CENSORING_VARIANTS, ScenarioSpec, generate_dataset,
                     run_power_study, scenario_names)
from ._streams import derive_rng

TWO_SAMPLE_ONLY = {"pepe_fleming", "lee", "maxcombo"}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


def _parse_methods(text: str) -> list:
    if text.strip() == "all":
        return list(ALL_METHODS)
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValueError(f"unknown tests {unknown}; available: "
                         f"{', '.join(ALL_METHODS)} (or 'all')")
    if not methods:
        raise ValueError("empty test list")
    return methods


def _parse_sizes(text: str) -> list:
    try:
        sizes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"sizes must be comma-separated integers: {text!r}")
    if not sizes or min(sizes) < 4:
        raise ValueError("each size must be an integer >= 4")
    return sizes


def _emit(meta: dict, columns: list, rows: list, fmt: str, stream) -> None:
    """Render one result table; floats in CSV/JSON keep full precision,
    the text table shows 4 significant digits."""
    if fmt == "json":
        json.dump({"meta": meta, "columns": columns,
                   "rows": [dict(zip(columns, r)) for r in rows]},
                  stream, indent=2)
        stream.write("\n")
        return
    if fmt == "csv":
        for key, val in meta.items():
            stream.write(f"# {key}: {val}\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return
    # aligned text table
    for key, val in meta.items():
        stream.write(f"{key}: {val}\n")
    cells = [[f"{v:.4g}" if isinstance(v, float) else str(v) for v in r]
             for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    stream.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
    for row in cells:
        stream.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def _common_meta(args, plan: PermutationPlan, methods: list) -> dict:
    return {
        "version": __version__,
        "command": args.command,
        "seed": plan.master_seed,
        "imputations": plan.imputations,
        "permutations": plan.permutations,
        "methods": ",".join(methods),
        "threads": args.threads,
    }


def cmd_test(args, stream) -> int:
    ds = load_csv(args.input, time_col=args.time_col,
                  status_col=args.status_col, group_col=args.group_col)
    methods = _parse_methods(args.tests)
    if ds.n_groups > 2:
        dropped = [m for m in methods if m in TWO_SAMPLE_ONLY]
        if dropped and args.tests.strip() != "all":
            raise ValueError(f"tests {dropped} are two-sample only, "
                             f"but the data has {ds.n_groups} groups")
        if dropped:
            print(f"note: skipping two-sample-only tests {dropped} "
                  f"(data has {ds.n_groups} groups)", file=sys.stderr)
            methods = [m for m in methods if m not in TWO_SAMPLE_ONLY]
    plan = PermutationPlan(args.imputations, args.permutations, args.seed)
    start = _time.perf_counter()
    reports = run_test_suite(ds, methods, plan, threads=args.threads)
    runtime = _time.perf_counter() - start
    meta = _common_meta(args, plan, methods)
    meta["input"] = args.input
    meta["n"] = ds.n
    meta["groups"] = ",".join(str(lab) for lab in ds.group_labels)
    meta["runtime_s"] = round(runtime, 3)
    columns = ["method", "statistic", "pvalue", "replicates", "seed", "degenerate"]
    rows = [[r.method, float(r.statistic), float(r.pvalue),
             r.replicates_used, r.seed, int(r.degenerate)] for r in reports]
    _emit(meta, columns, rows, args.output_format, stream)
    return EXIT_OK


def cmd_simulate(args, stream) -> int:
    if args.replications < 1:
        raise ValueError("replications must be >= 1")
    if args.scenario not in scenario_names():
        raise ValueError(f"unknown scenario {args.scenario!r}; available: "
                         f"{', '.join(scenario_names())}")
    methods = _parse_methods(args.tests)
    plan = PermutationPlan(args.imputations, args.permutations, args.seed)
    results = run_power_study(args.scenario, _parse_sizes(args.sizes),
                              censoring_variant=args.censoring,
                              methods=methods, replications=args.replications,
                              alpha=args.alpha, plan=plan,
                              master_seed=args.seed, threads=args.threads)
    meta = _common_meta(args, plan, methods)
    meta.update(scenario=args.scenario, censoring=args.censoring,
                replications=args.replications, alpha=args.alpha)
    columns = ["scenario", "n", "censoring", "method", "power", "se"]
    rows = [[res.scenario, res.n, res.censoring_variant, m,
             float(res.rejection_rate[m]), float(res.mc_se[m])]
            for res in results for m in methods]
    _emit(meta, columns, rows, args.output_format, stream)
    return EXIT_OK


_BENCH_CENSORING = {
    # two-group null datasets spanning equal and unequal censoring rates
    "equal_25": ("lnorm(1.1,0.5)", "lnorm(1.1,0.5)"),
    "equal_50": ("lnorm(0,0.5)", "lnorm(0,0.5)"),
    "unequal_mild": ("min(exp(0.85),unif(0,10))", "unif(0,10)"),
    "unequal_severe": ("min(exp(0.25),unif(0,10))", "unif(0,10)"),
}


def cmd_benchmark(args, stream) -> int:
    variants = (list(_BENCH_CENSORING) if args.censoring == "all"
                else [args.censoring])
    for v in variants:
        if v not in _BENCH_CENSORING:
            raise ValueError(f"unknown censoring variant {v!r}; available: "
                             f"{', '.join(_BENCH_CENSORING)} (or 'all')")
    sizes = _parse_sizes(args.sizes)
    plan = PermutationPlan(args.imputations, args.permutations, args.seed)
    methods = ["konp_p", "konp_lr"]
    meta = _common_meta(args, plan, methods)
    columns = ["n", "censoring", "threads", "replicates", "seconds"]
    rows = []
    for variant in variants:
        scen = ScenarioSpec(f"bench-{variant}", 2,
                            ("llogis(1,1)", "llogis(1,1)"),
                            _BENCH_CENSORING[variant])
        for n in sizes:
            ds = generate_dataset(scen, n, derive_rng(args.seed, n))
            start = _time.perf_counter()
            run_test_suite(ds, methods, plan, threads=args.threads)
            rows.append([n, variant, args.threads, plan.replicates,
                         _time.perf_counter() - start])
    _emit(meta, columns, rows, args.output_format, stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sspsurv",
        description="K-sample survival-distribution tests for right-censored data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, imputations, permutations):
        p.add_argument("--imputations", type=int, default=imputations,
                       help="imputed replicate sets M (default %(default)s)")
        p.add_argument("--permutations", type=int, default=permutations,
                       help="permutations per imputation B (default %(default)s)")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads (results do not depend on this)")
        p.add_argument("--output-format", choices=("table", "csv", "json"),
                       default="table")
        p.add_argument("--output", default=None,
                       help="output file (default: standard output)")

    p = sub.add_parser("test", help="run hypothesis tests on a CSV dataset")
    p.add_argument("--input", required=True, help="CSV file with headed columns")
    p.add_argument("--time-col", default="time")
    p.add_argument("--status-col", default="status")
    p.add_argument("--group-col", default="group")
    p.add_argument("--tests", default="all",
                   help="comma-separated subset of: %s; or 'all'" % ",".join(ALL_METHODS))
    common(p, imputations=10, permutations=10000)

    p = sub.add_parser("simulate", help="estimate size/power for a built-in scenario")
    p.add_argument("--scenario", required=True,
                   help="one of: %s" % ", ".join(scenario_names()))
    p.add_argument("--censoring", choices=CENSORING_VARIANTS, default="equal_25")
    p.add_argument("--sizes", default="102,201,300,402",
                   help="comma-separated total sample sizes")
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tests", default="konp_p,konp_lr,logrank,peto_peto")
    common(p, imputations=1, permutations=1000)

    p = sub.add_parser("benchmark", help="time the permutation engine")
    p.add_argument("--sizes", default="100,200,300,400,1000")
    p.add_argument("--censoring", default="all",
                   help="one of %s, or 'all'" % ", ".join(_BENCH_CENSORING))
    common(p, imputations=1, permutations=1000)
    return parser


_COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        buffer = io.StringIO()
        code = _COMMANDS[args.command](args, buffer)
        text = buffer.getvalue()
        if args.output is None:
            sys.stdout.write(text)
        else:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        return code
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
