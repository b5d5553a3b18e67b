"""Replicated benchmark runs, their persistence and summary tables."""

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .._validation import DomainError, derive_seed
from ..baselines import METHODS, RUNNERS, BaselineConfig
from ..config import load_flat, subtree
from ..ledger import OracleLedger
from ..oracles import QuadraticOracle
from ..pipeline import VARIANTS, AcfsConfig, run_acfs
from ..risk import RiskParams, bootstrap_ci, oracle_evaluate
from ..scenarios import DgpSpec
from ..stats import holm_adjust, rank_biserial, summarize, wilcoxon_signed_rank, win_rate

log = logging.getLogger(__name__)

COLUMNS = ["dgp", "lambda", "method", "rep", "seed"] + [f"x{i}" for i in range(1, 7)] + [
    "oracle_J", "oracle_EC", "oracle_CVaR", "oracle_calls", "seconds", "status"]
RESULTS_FILE = "results.csv"
TIMINGS_FILE = "timings.csv"

SENSITIVITY_GRID = {
    "n_a": (800, 1200, 1600),
    "n_f": (400, 800, 1200),
    "k_elites": (2, 4, 6),
    "n_d": (300, 450, 600),
}


@dataclass
class ExperimentPlan:
    """What to run: processes, risk weights, methods, replications and budgets.

    ``scale_divisor`` divides the training-set and Monte Carlo budgets of
    every method (the reduced "desk" profile); the final 2,000-draw
    evaluation is left untouched so scores stay comparable.
    ``record_time`` writes measured wall time into the ``seconds`` column,
    which makes results files differ between otherwise identical runs;
    wall times always go to the sidecar timings file.
    """

    dgps: tuple = ("DGP1", "DGP2")
    lambdas: tuple = (0.50, 0.70, 0.90)
    alpha: float = 0.95
    methods: tuple = METHODS
    n_replications: int = 100
    master_seed: int = 0
    oracle_eval_draws: int = 2000
    bootstrap_reps: int = 400
    scale_divisor: int = 1
    workers: int = 1
    record_time: bool = False
    acfs: AcfsConfig = field(default_factory=AcfsConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    sensitivity_dgp: str = "DGP1"
    sensitivity_lambda: float = 0.70
    sensitivity_reps: int = 20
    ablation_reps: int = 50

    def __post_init__(self):
        if self.n_replications < 1:
            raise DomainError("n_replications must be >= 1")
        if self.scale_divisor < 1:
            raise DomainError("scale_divisor must be >= 1")
        unknown = [m for m in self.methods if m not in METHODS and m not in VARIANTS]
        if unknown:
            raise DomainError(f"unknown methods: {unknown}")

    @property
    def acfs_effective(self):
        return self.acfs.scaled(self.scale_divisor)

    @property
    def baselines_effective(self):
        return self.baselines.scaled(self.scale_divisor)


def plan_from_mapping(mapping, base=None):
    """Build a plan from flat dotted keys (``plan.*``, ``acfs.*``, ``baselines.*``)."""
    plan = base or ExperimentPlan()
    simple = {}
    for f in fields(ExperimentPlan):
        if f.name in ("acfs", "baselines"):
            continue
        key = f"plan.{f.name}"
        if key in mapping:
            value = mapping[key]
            if f.name in ("dgps", "lambdas", "methods"):
                value = tuple(value) if isinstance(value, (list, tuple)) else (value,)
            simple[f.name] = value
    acfs = replace(plan.acfs, **subtree(mapping, "acfs"))
    baselines = replace(plan.baselines, **subtree(mapping, "baselines"))
    return replace(plan, acfs=acfs, baselines=baselines, **simple)


def load_plan(path, base=None):
    return plan_from_mapping(load_flat(path), base)


# --------------------------------------------------------------------------
# running


def make_dgp(name):
    if name.upper() == "QUAD":
        return QuadraticOracle()
    return DgpSpec(name)


def run_method(method, dgp, params, acfs_cfg, baseline_cfg, seed, ledger=None):
    """Run one named method (competitor, ACFS or an ACFS variant)."""
    ledger = OracleLedger() if ledger is None else ledger
    if method == "ACFS" or method in VARIANTS:
        cfg = acfs_cfg if method == "ACFS" else acfs_cfg.with_variant(method)
        return run_acfs(dgp, cfg, params, seed, ledger)
    return RUNNERS[method](dgp, params, baseline_cfg, seed, ledger)


def method_seed(master_seed, dgp, lam, method, rep):
    return derive_seed(master_seed, dgp, f"{lam:.6g}", method, rep)


def evaluation_seed(master_seed, dgp, lam, rep):
    """Shared by every method of a replication so oracle scores are paired."""
    return derive_seed(master_seed, dgp, f"{lam:.6g}", "evaluation", rep)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_task(task):
    (dgp_name, lam, method, rep, master, acfs_cfg, base_cfg, alpha, n_eval, run_label) = task
    seed = method_seed(master, dgp_name, lam, run_label, rep)
    params = RiskParams(lam, alpha)
    dgp = make_dgp(dgp_name)
    t0 = time.perf_counter()
    try:
        sol = run_method(method, dgp, params, acfs_cfg, base_cfg, seed)
        est = oracle_evaluate(sol.x_star, dgp, n_eval, params,
                              seed=evaluation_seed(master, dgp_name, lam, rep))
        x, calls, status = sol.x_star, sol.oracle_calls, "ok"
        J, EC, CV = est.total, est.expected_cost, est.cvar
    except Exception as exc:  # a failed replication is recorded, not fatal
        log.warning("%s %s lambda=%s rep=%d failed: %r", dgp_name, run_label, lam, rep, exc)
        x, calls, status = [float("nan")] * 6, 0, f"failed:{type(exc).__name__}"
        J = EC = CV = float("nan")
    seconds = time.perf_counter() - t0
    row = [dgp_name, float(lam), run_label, rep, seed] + [float(v) for v in x] + [
        float(J), float(EC), float(CV), int(calls), seconds, status]
    return row


def _read_rows(path):
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _row_key(dgp, lam, method, rep):
    return (str(dgp), f"{float(lam):.6g}", str(method), int(rep))


def run_tasks(plan, tasks, out_dir, results_name=RESULTS_FILE):
    """Execute ``(dgp, lambda, method, rep, config, label)`` tasks, appending rows.

    Rows already present (any status) are skipped, so an interrupted run can
    be resumed. Rows are written in task order by this process alone,
    whatever the worker count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / results_name
    done = {_row_key(r["dgp"], r["lambda"], r["method"], r["rep"]) for r in _read_rows(path)}
    todo = []
    base_cfg = plan.baselines_effective
    for dgp_name, lam, method, rep, acfs_cfg, label in tasks:
        if _row_key(dgp_name, lam, label, rep) in done:
            continue
        todo.append((dgp_name, lam, method, rep, plan.master_seed, acfs_cfg, base_cfg, plan.alpha,
                     plan.oracle_eval_draws, label))
    new_file = not path.exists() or path.stat().st_size == 0
    timing_path = out_dir / TIMINGS_FILE
    with path.open("a", newline="") as fh, timing_path.open("a", newline="") as th:
        writer, twriter = csv.writer(fh, lineterminator="\n"), csv.writer(th, lineterminator="\n")
        if new_file:
            writer.writerow(COLUMNS)
        if timing_path.stat().st_size == 0:
            twriter.writerow(["dgp", "lambda", "method", "rep", "seconds"])

        def emit(row):
            wall = row[-2]
            if not plan.record_time:
                row[-2] = 0.0
            writer.writerow([_fmt(v) for v in row])
            fh.flush()
            os.fsync(fh.fileno())
            twriter.writerow([row[0], _fmt(row[1]), row[2], row[3], f"{wall:.3f}"])
            th.flush()

        if plan.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                futures = [pool.submit(_run_task, t) for t in todo]
                for fut in futures:  # submission order keeps the file deterministic
                    emit(fut.result())
        else:
            for t in todo:
                emit(_run_task(t))
    return path


def run_experiment(plan, out_dir):
    """Main comparison: every (dgp, lambda, method, replication)."""
    acfs_cfg = plan.acfs_effective
    tasks = [(d, lam, m, rep, acfs_cfg, m)
             for d in plan.dgps for lam in plan.lambdas
             for rep in range(plan.n_replications) for m in plan.methods]
    return run_tasks(plan, tasks, out_dir)


def read_results(path):
    rows = []
    for r in _read_rows(Path(path)):
        rows.append({
            "dgp": r["dgp"], "lambda": float(r["lambda"]), "method": r["method"], "rep": int(r["rep"]),
            "seed": int(r["seed"]), "x": np.array([float(r[f"x{i}"]) for i in range(1, 7)]),
            "J": float(r["oracle_J"]), "EC": float(r["oracle_EC"]), "CVaR": float(r["oracle_CVaR"]),
            "oracle_calls": int(r["oracle_calls"]), "seconds": float(r["seconds"]), "status": r["status"],
        })
    return rows


# --------------------------------------------------------------------------
# summaries


def _write_table(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])


def _blocks(rows):
    blocks = {}
    for r in rows:
        if r["status"] == "ok":
            blocks.setdefault((r["dgp"], r["lambda"]), {}).setdefault(r["method"], {})[r["rep"]] = r
    return blocks


SUMMARY_HEADER = ["dgp", "lambda", "method", "n", "J_med", "J_sd", "J_q25", "J_q75", "EC_med",
                  "CVaR_med", "gap_pct"]
COMPARISON_HEADER = ["dgp", "lambda", "method", "n_pairs", "median_diff", "ci_lo", "ci_hi", "p_raw",
                     "p_holm", "r_rb", "abs_r_rb", "win_rate"]


def summarize_experiment(results_path, out_dir=None, reference="ACFS", bootstrap_reps=400, master_seed=0):
    """Per-setting summaries and paired tests against ``reference``.

    Returns ``(summary_rows, comparison_rows)`` as lists of dicts and, when
    ``out_dir`` is given, writes them as ``summary.csv`` and
    ``comparisons.csv``.
    """
    rows = read_results(results_path)
    summary, comparisons = [], []
    for (dgp, lam), by_method in sorted(_blocks(rows).items()):
        ref_med = None
        if reference in by_method:
            ref_med = summarize([r["J"] for r in by_method[reference].values()]).median
        for method, reps in by_method.items():
            s = summarize([r["J"] for r in reps.values()])
            gap = 100.0 * (s.median - ref_med) / ref_med if ref_med else float("nan")
            summary.append({
                "dgp": dgp, "lambda": lam, "method": method, "n": s.n, "J_med": s.median, "J_sd": s.sd,
                "J_q25": s.q25, "J_q75": s.q75,
                "EC_med": summarize([r["EC"] for r in reps.values()]).median,
                "CVaR_med": summarize([r["CVaR"] for r in reps.values()]).median,
                "gap_pct": 0.0 if method == reference else gap,
            })
        if reference not in by_method:
            continue
        block = []
        for method, reps in by_method.items():
            if method == reference:
                continue
            common = sorted(set(reps) & set(by_method[reference]))
            if not common:
                continue
            diffs = np.array([by_method[reference][k]["J"] - reps[k]["J"] for k in common])
            lo, hi = bootstrap_ci(diffs, "median", n_boot=bootstrap_reps,
                                  seed=derive_seed(master_seed, "ci", dgp, f"{lam:.6g}", method))
            rb = rank_biserial(diffs)
            block.append({
                "dgp": dgp, "lambda": lam, "method": method, "n_pairs": len(common),
                "median_diff": float(np.median(diffs)), "ci_lo": lo, "ci_hi": hi,
                "p_raw": wilcoxon_signed_rank(diffs, "less").p_value, "r_rb": rb.r,
                "abs_r_rb": rb.magnitude, "win_rate": win_rate(diffs),
            })
        for entry, p in zip(block, holm_adjust([b["p_raw"] for b in block])):
            entry["p_holm"] = float(p)
        comparisons.extend(block)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_table(out_dir / "summary.csv", SUMMARY_HEADER,
                     [[s[k] for k in SUMMARY_HEADER] for s in summary])
        _write_table(out_dir / "comparisons.csv", COMPARISON_HEADER,
                     [[c[k] for k in COMPARISON_HEADER] for c in comparisons])
    return summary, comparisons


# --------------------------------------------------------------------------
# ablation and sensitivity


ABLATION_HEADER = ["dgp", "lambda", "variant", "n", "J_med", "J_sd", "J_q25", "J_q75", "gap_pct",
                   "sigma_ratio"]


def ablation_table(rows, full="ACFS-Full"):
    """Gap% of the median and SD ratio of every variant relative to ``full``."""
    out = []
    for (dgp, lam), by_method in sorted(_blocks(rows).items()):
        if full not in by_method:
            continue
        ref = summarize([r["J"] for r in by_method[full].values()])
        for variant in VARIANTS:
            if variant not in by_method:
                continue
            s = summarize([r["J"] for r in by_method[variant].values()])
            out.append({"dgp": dgp, "lambda": lam, "variant": variant, "n": s.n, "J_med": s.median,
                        "J_sd": s.sd, "J_q25": s.q25, "J_q75": s.q75,
                        "gap_pct": 100.0 * (s.median - ref.median) / ref.median,
                        "sigma_ratio": s.sd / ref.sd if ref.sd > 0 else float("nan")})
    return out


def run_ablation(plan, out_dir, lam=0.70):
    acfs_cfg = plan.acfs_effective
    tasks = [(d, lam, v, rep, acfs_cfg, v)
             for d in plan.dgps for rep in range(plan.ablation_reps) for v in VARIANTS]
    path = run_tasks(plan, tasks, out_dir, "ablation_results.csv")
    table = ablation_table(read_results(path))
    _write_table(Path(out_dir) / "ablation_summary.csv", ABLATION_HEADER,
                 [[t[k] for k in ABLATION_HEADER] for t in table])
    return path, table


SENSITIVITY_HEADER = ["parameter", "value", "is_default", "n", "J_med", "J_sd", "J_q25", "J_q75"]


def sensitivity_points(base=None, grid=None):
    """One-at-a-time grid: ``(parameter, value, label, config)`` per point.

    Points equal to the defaults share the label ``"ACFS"`` (and hence the
    seeds and rows of the main experiment).
    """
    base = AcfsConfig() if base is None else base
    grid = SENSITIVITY_GRID if grid is None else grid
    points = []
    for name, values in grid.items():
        for value in values:
            is_default = getattr(base, name) == value
            label = "ACFS" if is_default else f"ACFS[{name}={value}]"
            points.append((name, value, label, replace(base, **{name: value})))
    return points


def run_sensitivity(plan, out_dir):
    points = sensitivity_points(plan.acfs)
    tasks, seen = [], set()
    for _, _, label, cfg in points:
        if label in seen:
            continue
        seen.add(label)
        scaled = cfg.scaled(plan.scale_divisor)
        for rep in range(plan.sensitivity_reps):
            tasks.append((plan.sensitivity_dgp, plan.sensitivity_lambda, "ACFS", rep, scaled, label))
    path = run_tasks(plan, tasks, out_dir, "sensitivity_results.csv")
    by_label = {}
    for r in read_results(path):
        if r["status"] == "ok":
            by_label.setdefault(r["method"], []).append(r["J"])
    table = []
    for name, value, label, _ in points:
        if label not in by_label:
            continue
        s = summarize(by_label[label])
        table.append({"parameter": name, "value": value, "is_default": label == "ACFS", "n": s.n,
                      "J_med": s.median, "J_sd": s.sd, "J_q25": s.q25, "J_q75": s.q75})
    _write_table(Path(out_dir) / "sensitivity_summary.csv", SENSITIVITY_HEADER,
                 [[t[k] for k in SENSITIVITY_HEADER] for t in table])
    return path, table
