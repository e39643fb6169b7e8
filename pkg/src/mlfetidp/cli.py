"""Command line entry point ``mlfetidp``.

Examples
--------
::

    mlfetidp run --levels 3 --ratios 3 --constraints c --method fetidp-mf
    mlfetidp run --config my.cfg --tol 1e-10
    mlfetidp table2 --out results/
    mlfetidp eigs --levels 3 --ratios 3 --constraints c+e --eigs-k 150 --out results/
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import asdict

from .harness import (
    METHODS,
    ConfigError,
    ExperimentConfig,
    build_setup,
    emit_eigs,
    load_config,
    run_experiment,
    run_table,
)


def _common(p, with_method=True):
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--levels", type=int, help="number of levels L (>= 2)")
    p.add_argument("--ratios", help="coarsening ratio, or comma separated list of L-1 ratios")
    p.add_argument("--constraints", choices=("c", "c+e"), help="corners, or corners and edge averages")
    if with_method:
        p.add_argument("--method", choices=METHODS)
    p.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-8)")
    p.add_argument("--load", help="constant load value or 'random'")
    p.add_argument("--eigs-k", type=int, dest="eigs_k", help="number of eigenvalues to dump")
    p.add_argument("--out", help="output directory")


def _config(args) -> ExperimentConfig:
    over = {k: getattr(args, k, None) for k in
            ("levels", "ratios", "constraints", "method", "tol", "load", "eigs_k")}
    if args.config:
        return load_config(args.config, **over)
    return ExperimentConfig(**{k: v for k, v in over.items() if v is not None})


def _write_rows(path, rows):
    # wall time goes to stdout only, so the CSV is reproducible
    names = [k for k in asdict(rows[0]) if k != "wall_time"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=names, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def cmd_run(args):
    cfg = _config(args)
    setup = build_setup(cfg)
    row = run_experiment(cfg, setup)
    print("| L | nsub | ndof | lambda_max | method | iterations | time [s] |")
    print("|---|---|---|---|---|---|---|")
    print(f"| {row.L} | {row.nsub} | {row.ndof:,} | {row.lambda_max:.4f} | "
          f"{row.method_label} | {row.iterations} | {row.wall_time:.2f} |")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_rows(os.path.join(args.out, "run.csv"), [row])
        if args.eigs_k:
            emit_eigs(cfg, args.eigs_k, os.path.join(args.out, "eigs.csv"), setup)
    return 0 if row.converged else 1


def cmd_table(args):
    res = run_table(args.command, tol=args.tol, out=args.out, jobs=args.jobs, load=args.load)
    print(res.markdown())
    return 0 if not any(r.error for r in res.rows) else 1


def cmd_eigs(args):
    cfg = _config(args)
    out = args.out or "."
    path = os.path.join(out, f"eigs_L{cfg.levels}_r{cfg.ratio_label}_{cfg.constraints}.csv")
    a, b = emit_eigs(cfg, cfg.eigs_k, path)
    print(f"wrote {len(a)} eigenvalues per operator to {path}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="mlfetidp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a single configuration")
    _common(p)
    p.set_defaults(func=cmd_run)
    for name, desc in (("table1", "corner constraints"), ("table2", "corners and edge averages")):
        p = sub.add_parser(name, help=f"all rows of the summary table with {desc}")
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--load", default=1.0)
        p.add_argument("--out", help="directory for <table>.csv and <table>.md")
        p.add_argument("--jobs", type=int, default=1, help="rows run in parallel processes")
        p.set_defaults(func=cmd_table)
    p = sub.add_parser("eigs", help="dump the largest eigenvalues of both preconditioned operators")
    _common(p, with_method=False)
    p.set_defaults(func=cmd_eigs)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"mlfetidp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
