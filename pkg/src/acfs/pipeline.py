"""The four-phase ACFS optimiser.

Phase 1 explores globally (maximin LHD training set, optional CEM warm
start on the true process, DE on a kernel surrogate, forest re-ranking);
phase 2 augments the training set around the best elites and refits the
forest; phase 3 builds a candidate pool and re-ranks it in two stages
(forest shortlist, then direct-process rescoring); phase 4 refines the
best seeds with projected L-BFGS on antithetic, common-random-number
estimates and confirms the winner at a shared seed.

Every scenario drawn from the true process is charged to an
:class:`~acfs.ledger.OracleLedger` under a per-phase budget line.
"""

import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import DomainError, OptimizationError, check_positive_int, derive_seed
from .forest import ConditionalForestSampler, surrogate_risk
from .kde import DecisionKernelSampler, kde_surrogate_risk
from .ledger import OracleLedger, Solution
from .risk import RiskParams, oracle_evaluate, spectral_risk
from .scenarios import DgpSpec, ScenarioCache, feasible_project
from .search import (DECISION_BOX, bounded_quasi_newton, cem_optimize, de_optimize,
                     fd_gradient_crn, maximin_lhd)

ABLATION_FLAGS = ("no_cem", "no_aug", "no_rerank", "no_av")
VARIANTS = {
    "ACFS-Full": {},
    "ACFS-NoCEM": {"no_cem": True},
    "ACFS-NoAug": {"no_aug": True},
    "ACFS-NoRerank": {"no_rerank": True},
    "ACFS-NoAV": {"no_av": True},
}

# budgets that shrink under the reduced "desk" profile
_SCALED_FIELDS = ("n_a", "n_b", "cem_mc", "n_c", "n_f", "n_d", "n_seeds")


@dataclass(frozen=True)
class AcfsConfig:
    """Hyperparameters of the four phases plus ablation switches."""

    # phase 1
    n_a: int = 1200
    lhd_restarts: int = 10
    grf_trees: int = 70
    grf_min_node: int = 15
    cem_iters: int = 7
    cem_pop: int = 35
    cem_mc: int = 300
    cem_elite_frac: float = 0.15
    cem_smoothing: float = 0.60
    cem_seed_sd: float = 0.04
    cem_seed_frac: float = 1 / 3
    kde_bandwidth: float = 0.15
    de_iters: int = 55
    de_pop: int = 85
    de_f: float = 0.7
    de_cr: float = 0.9
    n_c: int = 100
    n_f: int = 800
    k_elites: int = 4
    # phase 2
    n_b: int = 700
    aug_radius: float = 0.025
    aug_ratio: float = 0.6
    # phase 3
    pool_top_de: int = 30
    pool_perturb: int = 8
    pool_lhd: int = 60
    pool_cem: int = 25
    shortlist: int = 60
    n_d: int = 450
    # phase 4
    n_seeds: int = 30
    local_maxit: int = 80
    fd_step: float = 1e-4
    # ablation
    no_cem: bool = False
    no_aug: bool = False
    no_rerank: bool = False
    no_av: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type is int and (isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1):
                raise DomainError(f"{f.name} must be a positive integer, got {v!r}")
            if f.type is float and not v > 0:
                raise DomainError(f"{f.name} must be positive, got {v!r}")
        if self.n_seeds > self.shortlist:
            raise DomainError("n_seeds must not exceed shortlist")
        if self.k_elites > self.de_pop:
            raise DomainError("k_elites must not exceed de_pop")
        if not self.no_av and self.n_d % 2:
            raise DomainError("n_d must be even for antithetic sampling")

    @property
    def pool_size_nominal(self):
        k = self.k_elites
        cem = 0 if self.no_cem else self.pool_cem
        return k + self.pool_top_de + k * self.pool_perturb + self.pool_lhd + cem

    def scaled(self, divisor):
        """Copy with training-set, Monte Carlo and local-start budgets divided by ``divisor``."""
        divisor = check_positive_int(divisor, "divisor")
        if divisor == 1:
            return self
        new = {}
        for name in _SCALED_FIELDS:
            v = max(2, int(round(getattr(self, name) / divisor)))
            if name == "n_d":
                v += v % 2
            new[name] = v
        new["n_a"] = max(new["n_a"], 4 * self.grf_min_node)
        return replace(self, **new)

    def with_variant(self, variant):
        if variant not in VARIANTS:
            raise DomainError(f"unknown ablation variant {variant!r}")
        flags = dict.fromkeys(ABLATION_FLAGS, False)
        flags.update(VARIANTS[variant])
        return replace(self, **flags)

    def to_dict(self):
        return asdict(self)


def geometric_allocation(k, total, ratio=0.6):
    """Split ``total`` over ``k`` ranks with weights ``ratio**rank`` (largest remainder)."""
    k = check_positive_int(k, "k")
    w = ratio ** np.arange(k)
    share = total * w / w.sum()
    counts = np.floor(share).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def _dedupe(X, tol=1e-9):
    keep = []
    for i, x in enumerate(X):
        if all(np.max(np.abs(x - X[j])) > tol for j in keep):
            keep.append(i)
    return X[keep]


def _fit_forest(X, W, cfg, seed):
    return ConditionalForestSampler(n_trees=cfg.grf_trees, min_node=cfg.grf_min_node,
                                    random_state=seed).fit(X, W)


def _ledger(ledger):
    return OracleLedger() if ledger is None else ledger


# --------------------------------------------------------------------------
# phase 1


@dataclass
class ExplorationResult:
    elites: np.ndarray
    elite_scores: np.ndarray
    X: np.ndarray
    W: np.ndarray
    forest: ConditionalForestSampler
    population: np.ndarray
    population_scores: np.ndarray
    mu_cem: np.ndarray = None
    info: dict = field(default_factory=dict)


def phase1_explore(dgp, cfg, params, seed, ledger=None):
    """Global exploration: training set, CEM warm start, DE on the kernel surrogate."""
    ledger = _ledger(ledger)
    X = maximin_lhd(cfg.n_a, seed=derive_seed(seed, "lhd"), n_restarts=cfg.lhd_restarts)
    W = dgp.sample_each(X, seed=derive_seed(seed, "draws"))
    ledger.charge(cfg.n_a, "phase1.lhd")
    forest = _fit_forest(X, W, cfg, derive_seed(seed, "forest"))

    mu_cem = None
    if not cfg.no_cem:
        eval_rng = np.random.default_rng(derive_seed(seed, "cem.eval"))

        def cem_objective(x):
            est = oracle_evaluate(x, dgp, cfg.cem_mc, params,
                                  seed=int(eval_rng.integers(2**63 - 1)))
            ledger.charge(cfg.cem_mc, "phase1.cem")
            return est.total

        cem = cem_optimize(cem_objective, n_iters=cfg.cem_iters, pop_size=cfg.cem_pop,
                           elite_frac=cfg.cem_elite_frac, smoothing=cfg.cem_smoothing,
                           seed=derive_seed(seed, "cem"))
        mu_cem = feasible_project(DECISION_BOX.clip(cem.mean))

    n_seeded = 0 if mu_cem is None else int(np.ceil(cfg.de_pop * cfg.cem_seed_frac - 1e-12))
    init_rng = np.random.default_rng(derive_seed(seed, "de.init"))
    parts = []
    if n_seeded:
        cloud = mu_cem + cfg.cem_seed_sd * init_rng.standard_normal((n_seeded, mu_cem.size))
        parts.append(feasible_project(DECISION_BOX.clip(cloud)))
    parts.append(maximin_lhd(cfg.de_pop - n_seeded, seed=init_rng, n_restarts=cfg.lhd_restarts))
    init_pop = np.vstack(parts)

    kde = DecisionKernelSampler(bandwidth=cfg.kde_bandwidth).fit(X, W)
    kde_seed = derive_seed(seed, "kde.surrogate")

    def kde_objective(x):
        return kde_surrogate_risk(kde, x, cfg.n_c, params, dgp.cost, seed=kde_seed).total

    de = de_optimize(kde_objective, init_pop, n_iters=cfg.de_iters, F=cfg.de_f, CR=cfg.de_cr,
                     seed=derive_seed(seed, "de"))

    rescore_seed = derive_seed(seed, "rescore")
    scores = np.array([surrogate_risk(forest, x, cfg.n_f, params, dgp.cost, seed=rescore_seed).total
                       for x in de.population])
    order = np.argsort(scores, kind="stable")
    ranked = de.population[order]
    distinct = _dedupe(ranked)
    elites = distinct[:cfg.k_elites]
    elite_scores = np.array([scores[order][np.flatnonzero((ranked == e).all(axis=1))[0]] for e in elites])
    return ExplorationResult(elites, elite_scores, X, W, forest, ranked, scores[order], mu_cem,
                             info={"de_seeded_from_cem": n_seeded, "de_best_kde": de.best_f})


# --------------------------------------------------------------------------
# phase 2


def phase2_augment(elites, X, W, forest, dgp, cfg, seed, ledger=None):
    """Rank-weighted augmentation around the elites; returns ``(X_AB, W_AB, forest_AB, X_B)``."""
    if cfg.no_aug:
        return X, W, forest, np.empty((0, X.shape[1]))
    elites = np.atleast_2d(elites)
    if elites.shape[0] == 0:
        raise DomainError("need at least one elite")
    ledger = _ledger(ledger)
    counts = geometric_allocation(elites.shape[0], cfg.n_b, cfg.aug_ratio)
    rng = np.random.default_rng(derive_seed(seed, "perturb"))
    centres = np.repeat(elites, counts, axis=0)
    X_B = feasible_project(DECISION_BOX.clip(centres + cfg.aug_radius * rng.standard_normal(centres.shape)))
    W_B = dgp.sample_each(X_B, seed=derive_seed(seed, "draws"))
    ledger.charge(X_B.shape[0], "phase2.aug")
    X_AB, W_AB = np.vstack([X, X_B]), np.vstack([W, W_B])
    return X_AB, W_AB, _fit_forest(X_AB, W_AB, cfg, derive_seed(seed, "forest")), X_B


# --------------------------------------------------------------------------
# phase 3


def build_candidate_pool(elites, population, mu_cem, cfg, seed):
    """Elites, top DE members, elite perturbations, an LHD safety net and the CEM basin."""
    rng = np.random.default_rng(derive_seed(seed, "pool"))
    elites = np.atleast_2d(elites)
    others = [x for x in population if not any(np.max(np.abs(x - e)) <= 1e-9 for e in elites)]
    parts = [elites]
    if others:
        parts.append(np.asarray(others[:cfg.pool_top_de]))
    local = np.repeat(elites, cfg.pool_perturb, axis=0)
    parts.append(feasible_project(DECISION_BOX.clip(local + cfg.aug_radius * rng.standard_normal(local.shape))))
    parts.append(maximin_lhd(cfg.pool_lhd, seed=rng, n_restarts=cfg.lhd_restarts))
    if mu_cem is not None and not cfg.no_cem:
        cloud = mu_cem + cfg.cem_seed_sd * rng.standard_normal((cfg.pool_cem, mu_cem.size))
        parts.append(feasible_project(DECISION_BOX.clip(cloud)))
    return _dedupe(np.vstack(parts))


def phase3_rerank(pool, forest, dgp, cfg, params, seed, ledger=None):
    """Forest shortlist then direct-process rescoring; returns ``(seeds, scores)`` ascending."""
    pool = np.atleast_2d(pool)
    if pool.shape[0] == 0:
        raise DomainError("candidate pool is empty")
    ledger = _ledger(ledger)
    s1_seed = derive_seed(seed, "stage1")
    s1 = np.array([surrogate_risk(forest, x, cfg.n_f, params, dgp.cost, seed=s1_seed).total for x in pool])
    order = np.argsort(s1, kind="stable")
    n_keep = min(cfg.n_seeds, pool.shape[0])
    if cfg.no_rerank:
        idx = order[:n_keep]
        return pool[idx], s1[idx]
    short = pool[order[:min(cfg.shortlist, pool.shape[0])]]
    s2_seed = derive_seed(seed, "stage2")
    s2 = np.empty(short.shape[0])
    for i, x in enumerate(short):
        s2[i] = oracle_evaluate(x, dgp, cfg.n_d, params, seed=s2_seed, antithetic=not cfg.no_av).total
        ledger.charge(cfg.n_d, "phase3.stage2")
    idx = np.argsort(s2, kind="stable")[:n_keep]
    return short[idx], s2[idx]


# --------------------------------------------------------------------------
# phase 4


class _CrnObjective:
    """Objective and CRN gradient bound to one scenario cache per iterate."""

    def __init__(self, dgp, cfg, params, seed, ledger):
        self.dgp, self.cfg, self.params = dgp, cfg, params
        self.cache = ScenarioCache(dgp, cfg.n_d, antithetic=not cfg.no_av, seed=seed, ledger=ledger)

    def start(self, x0):
        self.cache.invalidate()
        self.cache.get(x0, 0)

    def refresh(self, x, k):
        self.cache.get(x, k)

    def __call__(self, x):
        block = self.cache.current
        if not np.array_equal(block.decision, x):
            block = block.at(x)
        return spectral_risk(self.dgp.cost(block, x), self.params).total

    def gradient(self, x):
        return fd_gradient_crn(self, x, step=self.cfg.fd_step)


def phase4_refine(seeds, dgp, cfg, params, seed, ledger=None):
    """Multi-start projected L-BFGS on CRN estimates; winner confirmed at a shared seed."""
    seeds = np.atleast_2d(seeds)
    if seeds.shape[0] == 0:
        raise DomainError("need at least one starting point")
    ledger = _ledger(ledger)
    ledger.set_line("phase4.refine")
    # one cache seed for every start: identical starts give identical runs
    obj = _CrnObjective(dgp, cfg, params, derive_seed(seed, "crn"), ledger)
    confirm_seed = derive_seed(seed, "confirm")
    runs, failures = [], []
    for i, x0 in enumerate(seeds):
        try:
            obj.start(x0)
            f0 = obj(x0)
            res = bounded_quasi_newton(obj, obj.gradient, x0, max_iter=cfg.local_maxit,
                                       on_accept=obj.refresh)
        except (OptimizationError, FloatingPointError) as exc:
            failures.append((i, repr(exc)))
            continue
        est = oracle_evaluate(res.x, dgp, cfg.n_d, params, seed=confirm_seed, antithetic=not cfg.no_av)
        ledger.charge(cfg.n_d, "phase4.confirm")
        runs.append({"start": i, "x0": x0, "f0": f0, "x": res.x, "f": res.f, "n_iter": res.n_iter,
                     "status": res.status, "confirm": est})
    ledger.set_line("main")
    if not runs:
        raise OptimizationError(f"all {seeds.shape[0]} local starts failed: {failures}")
    best = min(runs, key=lambda r: r["confirm"].total)
    return Solution(best["x"], best["confirm"], ledger.total, ledger.lines,
                    info={"starts": runs, "failures": failures,
                          "cache_generations": obj.cache.generations})


# --------------------------------------------------------------------------
# driver


def expected_budget(cfg, cache_generations, n_confirm=None, n_stage2=None):
    """Closed-form oracle draws per budget line for a finished run.

    Phase 4 depends on how many iterates the local searches visited, so
    the number of cache generations (and of confirmed starts) is an input.
    """
    lines = {"phase1.lhd": cfg.n_a}
    if not cfg.no_cem:
        lines["phase1.cem"] = cfg.cem_iters * cfg.cem_pop * cfg.cem_mc
    if not cfg.no_aug:
        lines["phase2.aug"] = cfg.n_b
    if not cfg.no_rerank:
        lines["phase3.stage2"] = cfg.shortlist * cfg.n_d if n_stage2 is None else n_stage2 * cfg.n_d
    lines["phase4.refine"] = cache_generations * cfg.n_d
    lines["phase4.confirm"] = (cfg.n_seeds if n_confirm is None else n_confirm) * cfg.n_d
    return lines


def run_acfs(dgp, cfg=None, params=None, master_seed=0, ledger=None):
    """Run all four phases; phase seeds are derived from ``master_seed``."""
    cfg = AcfsConfig() if cfg is None else cfg
    params = RiskParams() if params is None else params
    ledger = _ledger(ledger)
    timings = {}
    t = time.perf_counter()
    p1 = phase1_explore(dgp, cfg, params, derive_seed(master_seed, "acfs", "phase1"), ledger)
    timings["phase1"] = time.perf_counter() - t

    t = time.perf_counter()
    X_ab, W_ab, forest_ab, X_b = phase2_augment(p1.elites, p1.X, p1.W, p1.forest, dgp, cfg,
                                                derive_seed(master_seed, "acfs", "phase2"), ledger)
    timings["phase2"] = time.perf_counter() - t

    t = time.perf_counter()
    p3_seed = derive_seed(master_seed, "acfs", "phase3")
    pool = build_candidate_pool(p1.elites, p1.population, p1.mu_cem, cfg, p3_seed)
    starts, start_scores = phase3_rerank(pool, forest_ab, dgp, cfg, params, p3_seed, ledger)
    timings["phase3"] = time.perf_counter() - t

    t = time.perf_counter()
    sol = phase4_refine(starts, dgp, cfg, params, derive_seed(master_seed, "acfs", "phase4"), ledger)
    timings["phase4"] = time.perf_counter() - t

    sol.timings = timings
    sol.oracle_calls = ledger.total
    sol.ledger_lines = ledger.lines
    sol.info.update({
        "elites": p1.elites, "mu_cem": p1.mu_cem, "pool_size": pool.shape[0],
        "training_size": X_ab.shape[0], "n_augmented": X_b.shape[0],
        "start_scores": start_scores, "shortlist_size": min(cfg.shortlist, pool.shape[0]),
    })
    return sol


class ACFS(BaseEstimator):
    """Estimator-style wrapper around :func:`run_acfs`.

    ``fit`` runs the optimiser on the configured process; the decision is
    exposed as ``x_star_`` and the full record as ``solution_``.

    Parameters
    ----------
    dgp : {"DGP1", "DGP2"} or process object
    lam, alpha : float
        Risk weight and CVaR level.
    config : AcfsConfig or None
    random_state : int
    """

    def __init__(self, dgp="DGP1", lam=0.70, alpha=0.95, config=None, random_state=0):
        self.dgp = dgp
        self.lam = lam
        self.alpha = alpha
        self.config = config
        self.random_state = random_state

    def fit(self, X=None, y=None):
        dgp = DgpSpec(self.dgp) if isinstance(self.dgp, str) else self.dgp
        self.ledger_ = OracleLedger()
        self.solution_ = run_acfs(dgp, self.config, RiskParams(self.lam, self.alpha),
                                  self.random_state, self.ledger_)
        self.x_star_ = self.solution_.x_star
        return self
