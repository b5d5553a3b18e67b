"""Acceptance suite: one test (and one reported pass/fail line) per criterion.

Criteria 9 and 11 share a single desk-scale benchmark run (divisor 4,
lambda 0.70, 10 replications, both processes), so the whole module takes
on the order of 20 minutes on one core.
"""

import time

import numpy as np
import pytest

from acfs import (AcfsConfig, BaselineConfig, ConditionalForestSampler, DgpSpec, OracleLedger, QuadraticOracle,
                  RiskParams, derive_seed, empirical_cvar, run_acfs, spectral_risk, systematic_resample)
from acfs.baselines import RUNNERS
from acfs.bench.experiment import ExperimentPlan, read_results, run_experiment
from acfs.pipeline import VARIANTS, expected_budget, phase1_explore
from acfs.risk import oracle_evaluate, ru_objective
from acfs.scenarios import ScenarioCache
from acfs.search import fd_gradient_crn
from acfs.stats import holm_adjust, summarize, wilcoxon_signed_rank

from conftest import random_feasible

DESK_SEED = 2024


# --------------------------------------------------------------------------
# 1-2: CVaR


def test_criterion_01_cvar_equals_ru_minimum(acceptance_report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 51))
        costs = rng.standard_t(3, size=n) * rng.uniform(0.1, 50)
        alpha = float(rng.uniform(0.0, 0.99))
        # 10^4-point grid over the sample range, plus the sample points where the minimum is attained
        tau = np.concatenate([np.linspace(costs.min(), costs.max(), 10_000), costs])
        brute = float(ru_objective(costs, alpha, tau).min())
        worst = max(worst, abs(empirical_cvar(costs, alpha) - brute))
    elapsed = time.perf_counter() - t0
    ok = acceptance_report(1, worst <= 1e-8 and elapsed < 5.0,
                           f"max |sorted-tail - RU brute force| = {worst:.2e} (tol 1e-8), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_coherence(acceptance_report):
    rng = np.random.default_rng(102)
    worst_t = worst_h = 0.0
    for _ in range(100):
        costs = rng.normal(0, 10, size=int(rng.integers(1, 51)))
        alpha = float(rng.uniform(0.0, 0.99))
        c, k = rng.uniform(-50, 50), rng.uniform(0.1, 10)
        base = empirical_cvar(costs, alpha)
        worst_t = max(worst_t, abs(empirical_cvar(costs + c, alpha) - (base + c)))
        worst_h = max(worst_h, abs(empirical_cvar(k * costs, alpha) - k * base))
    ok = acceptance_report(2, max(worst_t, worst_h) <= 1e-10,
                           f"translation err {worst_t:.1e}, homogeneity err {worst_h:.1e} (tol 1e-10)")
    assert ok


# --------------------------------------------------------------------------
# 3-4: forest weights and resampling


def _hand_cases():
    """Single trees whose leaves are forced by min_node; expected weights written out."""
    X2 = np.array([[0.0], [0.1], [0.2], [0.8], [0.9], [1.0]])
    W2 = np.array([[0.0], [0.0], [0.0], [10.0], [10.0], [10.0]])
    X3 = np.array([[0.0], [0.05], [0.1], [0.5], [0.55], [0.6], [1.0], [1.05], [1.1]])
    W3 = np.repeat([[0.0], [5.0], [10.0]], 3, axis=0)
    third = 1 / 3
    return [
        (X2, W2, 3, [0.05], [third] * 3 + [0.0] * 3),
        (X2, W2, 3, [0.95], [0.0] * 3 + [third] * 3),
        (X2, W2, 4, [0.5], [1 / 6] * 6),
        (X3, W3, 3, [0.52], [0.0] * 3 + [third] * 3 + [0.0] * 3),
        (X3, W3, 3, [2.0], [0.0] * 6 + [third] * 3),
    ]


def test_criterion_03_forest_weights(acceptance_report):
    rng = np.random.default_rng(103)
    dgp = DgpSpec("DGP1")
    worst_sum, min_w, pairs = 0.0, np.inf, 0
    for m in range(5):
        X = random_feasible(rng, 300)
        model = ConditionalForestSampler(n_trees=70, min_node=15, random_state=m).fit(X, dgp.sample_each(X, seed=m))
        for q in random_feasible(rng, 200):
            w = model.weights(q)
            worst_sum = max(worst_sum, abs(w.sum() - 1.0))
            min_w = min(min_w, w.min())
            pairs += 1
    hand_ok = True
    for X, W, min_node, q, expected in _hand_cases():
        model = ConditionalForestSampler(n_trees=1, min_node=min_node, sample_fraction=1.0, random_state=0).fit(X, W)
        hand_ok &= bool(np.array_equal(model.weights(q), np.asarray(expected)))
    ok = acceptance_report(3, worst_sum <= 1e-12 and min_w >= 0 and hand_ok and pairs == 1000,
                           f"{pairs} pairs: max |sum-1| = {worst_sum:.1e}, min weight {min_w:.1e}; "
                           f"hand-built single trees exact: {hand_ok}")
    assert ok


def test_criterion_04_systematic_count_bound(acceptance_report):
    rng = np.random.default_rng(104)
    worst, checks = 0.0, 0
    for _ in range(10_000):
        k = int(rng.integers(1, 60))
        w = rng.exponential(size=k) * (rng.random(k) > 0.2)
        if w.sum() == 0:
            w[0] = 1.0
        n = int(rng.integers(1, 400))
        target = n * w / w.sum()
        for u in (0.0, 0.5, float(np.nextafter(1.0, 0.0)), float(rng.random())):
            counts = np.bincount(systematic_resample(w, n, seed=u), minlength=k)
            worst = max(worst, float(np.max(np.abs(counts - target))))
            checks += 1
    ok = acceptance_report(4, worst < 1.0, f"max |count - n w| = {worst:.6f} over {checks} (vector, offset) checks")
    assert ok


# --------------------------------------------------------------------------
# 5-6: variance reduction


def test_criterion_05_antithetic_reduction(acceptance_report):
    """Per seed pair, 250 replicate estimates per arm; both arms of a replicate share its seed."""
    dgp, params = DgpSpec("DGP2"), RiskParams()
    decisions = random_feasible(np.random.default_rng(2025), 3)
    n_rep = 250
    t0 = time.perf_counter()
    shares = []
    for x in decisions:
        wins = 0
        for pair in range(50):
            seeds = [derive_seed(7, pair, r) for r in range(n_rep)]
            av = [oracle_evaluate(x, dgp, 450, params, seed=s, antithetic=True).total for s in seeds]
            iid = [oracle_evaluate(x, dgp, 450, params, seed=s).total for s in seeds]
            wins += np.var(av, ddof=1) < np.var(iid, ddof=1)
        shares.append(wins / 50)
    elapsed = time.perf_counter() - t0
    ok = acceptance_report(5, min(shares) >= 0.8 and elapsed < 60.0,
                           f"share of seed pairs with lower antithetic variance: {[round(float(s), 2) for s in shares]} (need >= 0.8), "
                           f"{elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_06_crn_gradients(acceptance_report):
    dgp, params = DgpSpec("DGP1"), RiskParams()
    decisions = random_feasible(np.random.default_rng(2026), 3)
    repeat_ok, sd_ok, ratios = True, True, []
    for x in decisions:
        crn, plain = [], []
        for s in range(20):
            block = ScenarioCache(dgp, 450, antithetic=True, seed=s).get(x, 0)

            def f(y, block=block):
                return spectral_risk(dgp.cost(block if np.array_equal(y, block.decision) else block.at(y), y),
                                     params).total

            g = fd_gradient_crn(f, x)
            repeat_ok &= bool(np.array_equal(g, fd_gradient_crn(f, x)))
            crn.append(g)
            fresh = np.random.default_rng([s, 99])

            def f_off(y, fresh=fresh):
                return oracle_evaluate(y, dgp, 450, params, seed=fresh, antithetic=True).total

            plain.append(fd_gradient_crn(f_off, x))
        sd_crn, sd_off = np.std(crn, axis=0, ddof=1), np.std(plain, axis=0, ddof=1)
        sd_ok &= bool(np.all(sd_crn < sd_off))
        ratios.append(float(np.max(sd_crn / sd_off)))
    ok = acceptance_report(6, repeat_ok and sd_ok,
                           f"bit-identical repeats: {repeat_ok}; CRN SD < CRN-off SD in every component: {sd_ok} "
                           f"(worst SD ratio per decision {np.round(ratios, 5).tolist()})")
    assert ok


# --------------------------------------------------------------------------
# 7: statistics


def test_criterion_07_wilcoxon_and_holm(acceptance_report):
    p5 = wilcoxon_signed_rank([-1.0, -2.0, -3.0, -4.0, -5.0], alternative="less").p_value
    rng = np.random.default_rng(107)
    gap = 0.0
    for _ in range(100):
        d = rng.normal(rng.uniform(-0.5, 0.5), 1.0, size=30)
        gap = max(gap, abs(wilcoxon_signed_rank(d, method="exact").p_value
                           - wilcoxon_signed_rank(d, method="normal").p_value))
    holm = holm_adjust([0.005, 0.01, 0.03, 0.04])
    holm_ok = bool(np.allclose(holm, [0.02, 0.03, 0.06, 0.06], rtol=0, atol=1e-12))
    ok = acceptance_report(7, p5 == 1 / 32 and gap <= 0.02 and holm_ok,
                           f"five same-sign p = {p5} (1/32); max |exact - normal| at n=30 = {gap:.4f} (<= 0.02); "
                           f"Holm {np.round(holm, 4).tolist()}")
    assert ok


# --------------------------------------------------------------------------
# 8: deterministic oracle


def test_criterion_08_quadratic_convergence(acceptance_report):
    oracle, params = QuadraticOracle(), RiskParams()
    acfs_cfg, base_cfg = AcfsConfig().scaled(4), BaselineConfig().scaled(4)
    t0 = time.perf_counter()
    hits, acfs_tight = {}, 0
    for method in ("ACFS",) + tuple(RUNNERS):
        hits[method] = 0
        for seed in range(10):
            if method == "ACFS":
                sol = run_acfs(oracle, acfs_cfg, params, seed)
            else:
                sol = RUNNERS[method](oracle, params, base_cfg, seed)
            err = float(np.linalg.norm(sol.x_star - oracle.optimum))
            hits[method] += err <= 5e-2
            if method == "ACFS":
                acfs_tight += err <= 1e-3
    elapsed = time.perf_counter() - t0
    ok = acceptance_report(8, all(h >= 9 for h in hits.values()) and acfs_tight >= 9 and elapsed < 300,
                           f"seeds within 5e-2: {hits}; ACFS within 1e-3: {acfs_tight}/10; {elapsed:.0f} s (< 300 s)")
    assert ok


# --------------------------------------------------------------------------
# 9 and 11: desk-scale benchmark


def desk_plan():
    return ExperimentPlan(dgps=("DGP1", "DGP2"), lambdas=(0.70,), alpha=0.95, n_replications=10, scale_divisor=4,
                          master_seed=DESK_SEED)


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_a")
    t0 = time.perf_counter()
    path = run_experiment(desk_plan(), out)
    return path, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_09_directional_reproduction(desk_run, acceptance_report):
    path, elapsed = desk_run
    rows = read_results(path)
    med, passed = {}, True
    for dgp in ("DGP1", "DGP2"):
        for method in ("ACFS", "SGD-CVaR", "KDE-SO"):
            vals = [r["J"] for r in rows if r["dgp"] == dgp and r["method"] == method and r["status"] == "ok"]
            med[(dgp, method)] = summarize(vals).median if vals else float("nan")
        passed &= med[(dgp, "ACFS")] <= min(med[(dgp, "SGD-CVaR")], med[(dgp, "KDE-SO")])
    n_failed = sum(r["status"] != "ok" for r in rows)
    detail = "; ".join(f"{d}: ACFS {med[(d, 'ACFS')]:.2f}, SGD-CVaR {med[(d, 'SGD-CVaR')]:.2f}, "
                       f"KDE-SO {med[(d, 'KDE-SO')]:.2f}" for d in ("DGP1", "DGP2"))
    ok = acceptance_report(9, bool(passed) and n_failed == 0 and elapsed < 1800,
                           f"median oracle J  {detail}; failed rows {n_failed}; {elapsed / 60:.1f} min (< 30 min)")
    assert ok


@pytest.mark.slow
def test_criterion_11_reproducible_results_file(desk_run, tmp_path, acceptance_report):
    first, _ = desk_run
    second = run_experiment(desk_plan(), tmp_path)
    a, b = first.read_bytes(), second.read_bytes()
    ok = acceptance_report(11, a == b, f"two desk-scale runs from seed {DESK_SEED}: {len(a)} bytes each, "
                                       f"byte-identical: {a == b}")
    assert ok


# --------------------------------------------------------------------------
# 10: ablation plumbing


def test_criterion_10_ablation_budget_lines(acceptance_report):
    dgp, params = DgpSpec("DGP1"), RiskParams()
    nominal = AcfsConfig()
    full, nocem = OracleLedger(), OracleLedger()
    phase1_explore(dgp, nominal, params, seed=5, ledger=full)
    phase1_explore(dgp, nominal.with_variant("ACFS-NoCEM"), params, seed=5, ledger=nocem)
    removed = {k: v for k, v in full.lines.items() if nocem.lines.get(k) != v}
    nominal_ok = removed == {"phase1.cem": 7 * 35 * 300} and full.total - nocem.total == 73_500

    desk = AcfsConfig().scaled(4)
    dropped = {"ACFS-Full": None, "ACFS-NoCEM": "phase1.cem", "ACFS-NoAug": "phase2.aug",
               "ACFS-NoRerank": "phase3.stage2", "ACFS-NoAV": None}
    static_full = {k: v for k, v in expected_budget(desk, 0).items() if not k.startswith("phase4")}
    variant_ok = {}
    for variant in VARIANTS:
        cfg = desk.with_variant(variant)
        ledger = OracleLedger()
        sol = run_acfs(dgp, cfg, params, master_seed=9, ledger=ledger)
        static = {k: v for k, v in ledger.lines.items() if not k.startswith("phase4")}
        want = {k: v for k, v in static_full.items() if k != dropped[variant]}
        closed = expected_budget(cfg, sol.info["cache_generations"], n_confirm=len(sol.info["starts"]))
        variant_ok[variant] = static == want and ledger.lines == closed
    ok = acceptance_report(10, nominal_ok and all(variant_ok.values()),
                           f"NoCEM removes {full.total - nocem.total} = 7*35*300 draws at nominal budgets: "
                           f"{nominal_ok}; desk-scale ledgers match the documented lines: {variant_ok}")
    assert ok
