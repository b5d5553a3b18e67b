"""Command-line entry point: ``acfs-bench {run,summarize,ablation,sensitivity,figures}``."""

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..baselines import METHODS
from ..pipeline import VARIANTS
from .experiment import (RESULTS_FILE, ExperimentPlan, load_plan, run_ablation, run_experiment,
                         run_sensitivity, summarize_experiment)
from .figures import emit_figures


def _csv_list(text, cast=str):
    return tuple(cast(t.strip()) for t in text.split(",") if t.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="acfs-bench", description=__doc__)
    p.add_argument("verb", choices=["run", "summarize", "ablation", "sensitivity", "figures"])
    p.add_argument("--config", type=Path, help="flat key = value file (plan.*, acfs.*, baselines.*)")
    p.add_argument("--dgp", type=lambda s: _csv_list(s, str.upper), help="e.g. DGP1,DGP2")
    p.add_argument("--lambda", dest="lambdas", type=lambda s: _csv_list(s, float), help="e.g. 0.5,0.7")
    p.add_argument("--methods", type=_csv_list, help=f"subset of {','.join(METHODS + tuple(VARIANTS))}")
    p.add_argument("--reps", type=int, help="replications (also used for ablation/sensitivity)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--scale-divisor", type=int, help="divide training and Monte Carlo budgets")
    p.add_argument("--workers", type=int, help="parallel replications")
    p.add_argument("--record-time", action="store_true", help="write wall time into results")
    p.add_argument("--out", type=Path, default=Path("bench_out"), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def plan_from_args(args):
    plan = load_plan(args.config) if args.config else ExperimentPlan()
    updates = {}
    if args.dgp:
        updates["dgps"] = args.dgp
    if args.lambdas:
        updates["lambdas"] = args.lambdas
    if args.methods:
        updates["methods"] = args.methods
    if args.reps is not None:
        updates.update(n_replications=args.reps, ablation_reps=args.reps, sensitivity_reps=args.reps)
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.scale_divisor is not None:
        updates["scale_divisor"] = args.scale_divisor
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.record_time:
        updates["record_time"] = True
    return replace(plan, **updates)


def _print_table(rows, stream=None):
    stream = sys.stdout if stream is None else stream
    if not rows:
        print("(no rows)", file=stream)
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(rows[0].keys())
    for r in rows:
        w.writerow([f"{v:.4g}" if isinstance(v, float) else v for v in r.values()])


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    plan = plan_from_args(args)
    out = args.out
    if args.verb == "run":
        path = run_experiment(plan, out)
        print(f"results: {path}")
    elif args.verb == "summarize":
        summary, comparisons = summarize_experiment(out / RESULTS_FILE, out, bootstrap_reps=plan.bootstrap_reps,
                                                    master_seed=plan.master_seed)
        _print_table(summary)
        print()
        _print_table(comparisons)
    elif args.verb == "ablation":
        lam = plan.lambdas[0] if args.lambdas else 0.70
        _, table = run_ablation(plan, out, lam=lam)
        _print_table(table)
    elif args.verb == "sensitivity":
        _, table = run_sensitivity(plan, out)
        _print_table(table)
    elif args.verb == "figures":
        sens = None
        sens_path = out / "sensitivity_summary.csv"
        if sens_path.exists():
            with sens_path.open() as fh:
                sens = [{k: (float(v) if k.startswith("J_") else v) for k, v in r.items()}
                        for r in csv.DictReader(fh)]
        for path in emit_figures(out / RESULTS_FILE, out / "figures", sensitivity=sens):
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
