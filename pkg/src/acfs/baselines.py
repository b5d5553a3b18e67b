"""Competitor optimisers: GP-BO, CEM-SO, SGD-CVaR and KDE-SO.

All four consume the true process only through an
:class:`~acfs.ledger.OracleLedger`, and none uses antithetic pairing or
common random numbers across oracle calls: every call to the plain
evaluator takes fresh draws.
"""

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ._validation import DomainError, OptimizationError, check_positive_int, derive_seed
from .gp import SEARDGaussianProcess, expected_improvement
from .kde import DecisionKernelSampler, kde_surrogate_risk
from .ledger import OracleLedger, Solution
from .risk import RiskParams, oracle_evaluate, spectral_risk
from .search import (DECISION_BOX, adam_optimize, bounded_quasi_newton, cem_optimize, de_optimize,
                     fd_gradient_crn, maximin_lhd)
from .scenarios import feasible_project

METHODS = ("ACFS", "GP-BO", "CEM-SO", "SGD-CVaR", "KDE-SO")

_SCALED_FIELDS = ("gp_mc", "gp_polish_mc", "cem_mc", "sgd_batch", "sgd_final_mc", "sgd_polish_mc",
                  "kde_train", "kde_mc", "kde_final_mc")


@dataclass(frozen=True)
class BaselineConfig:
    """Hyperparameters of the four competitors."""

    # GP-BO
    gp_n_init: int = 18
    gp_steps: int = 25
    gp_mc: int = 130
    gp_refit_every: int = 5
    gp_candidates: int = 2000
    gp_ei_polish_iter: int = 20
    gp_polish_mc: int = 520
    # CEM-SO
    cem_iters: int = 12
    cem_pop: int = 55
    cem_elite: float = 0.15
    cem_smoothing: float = 0.60
    cem_mc: int = 130
    # SGD-CVaR
    sgd_warm_chains: int = 2
    sgd_warm_iters: int = 80
    sgd_fine_iters: int = 160
    sgd_batch: int = 60
    sgd_lr0: float = 0.05
    sgd_final_mc: int = 500
    sgd_polish_mc: int = 500
    # KDE-SO
    kde_train: int = 2600
    kde_mc: int = 100
    kde_bandwidth: float = 0.15
    kde_de_iters: int = 55
    kde_de_pop: int = 85
    kde_starts: int = 5
    kde_final_mc: int = 500
    # shared
    polish_maxit: int = 80
    fd_step: float = 1e-4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type is int and (isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1):
                raise DomainError(f"{f.name} must be a positive integer, got {v!r}")
            if f.type is float and not v > 0:
                raise DomainError(f"{f.name} must be positive, got {v!r}")

    @property
    def cem_polish_mc(self):
        """CEM-SO polishes at four times its search budget."""
        return 4 * self.cem_mc

    def scaled(self, divisor):
        """Copy with Monte Carlo and training budgets divided by ``divisor``."""
        divisor = check_positive_int(divisor, "divisor")
        if divisor == 1:
            return self
        new = {name: max(2, int(round(getattr(self, name) / divisor))) for name in _SCALED_FIELDS}
        return replace(self, **new)

    def to_dict(self):
        return asdict(self)


class PlainEvaluator:
    """Fresh-draw spectral-risk estimator charged to a ledger line.

    Each call takes ``n`` new independent draws from the next seed of its
    own stream. The most recent estimate at each point is remembered so a
    caller can report the estimate at its final iterate.
    """

    def __init__(self, dgp, n, params, seed, ledger, line):
        self.dgp, self.n, self.params = dgp, n, params
        self.rng = np.random.default_rng(seed)
        self.ledger, self.line = ledger, line
        self.last = {}
        self.calls = 0

    def estimate(self, x):
        est = oracle_evaluate(x, self.dgp, self.n, self.params, seed=int(self.rng.integers(2**63 - 1)))
        self.ledger.charge(self.n, self.line)
        self.calls += 1
        self.last[np.asarray(x, dtype=float).tobytes()] = est
        return est

    def __call__(self, x):
        return self.estimate(x).total

    def gradient(self, x, step=1e-4):
        return fd_gradient_crn(self, x, step=step)


def _polish(evaluator, x0, cfg):
    res = bounded_quasi_newton(evaluator, lambda x: evaluator.gradient(x, cfg.fd_step), x0,
                               max_iter=cfg.polish_maxit)
    est = evaluator.last.get(np.asarray(res.x, dtype=float).tobytes())
    return res, est


def _solution(x, est, ledger, info):
    return Solution(np.asarray(x, dtype=float), est, ledger.total, ledger.lines, info=info)


def _defaults(cfg, params, ledger):
    return (BaselineConfig() if cfg is None else cfg, RiskParams() if params is None else params,
            OracleLedger() if ledger is None else ledger)


# --------------------------------------------------------------------------
# GP-BO


def _fit_gp(X, y, seed, noise_floor=1e-8, attempts=3):
    last = None
    for k in range(attempts):
        try:
            return SEARDGaussianProcess(bounds=DECISION_BOX, noise_floor=noise_floor * 100**k,
                                        noise_variance=max(1e-4, noise_floor * 100**k),
                                        random_state=derive_seed(seed, k)).fit(X, y)
        except (OptimizationError, np.linalg.LinAlgError) as exc:
            last = exc
    raise OptimizationError(f"GP fit failed after {attempts} attempts: {last!r}")


def run_gp_bo(dgp, params=None, cfg=None, seed=0, ledger=None):
    """Expected-improvement Bayesian optimisation followed by a quasi-Newton polish."""
    cfg, params, ledger = _defaults(cfg, params, ledger)
    search = PlainEvaluator(dgp, cfg.gp_mc, params, derive_seed(seed, "gp.eval"), ledger, "gp.search")
    X = maximin_lhd(cfg.gp_n_init, seed=derive_seed(seed, "gp.init"))
    y = np.array([search(x) for x in X])
    gp = _fit_gp(X, y, derive_seed(seed, "gp.fit", 0))
    refits = []
    cand_rng = np.random.default_rng(derive_seed(seed, "gp.candidates"))
    for a in range(1, cfg.gp_steps + 1):
        best_y = float(y.min())
        cands = feasible_project(DECISION_BOX.lo + cand_rng.random((cfg.gp_candidates, X.shape[1]))
                                 * DECISION_BOX.width)
        mean, std = gp.predict(cands, return_std=True)
        ei = expected_improvement(mean, std, best_y)
        x_top = cands[int(np.argmax(ei))]

        def neg_ei(x):
            m, s = gp.predict(x[None, :], return_std=True)
            return -float(expected_improvement(m, s, best_y)[0])

        res = bounded_quasi_newton(neg_ei, lambda x: fd_gradient_crn(neg_ei, x, step=cfg.fd_step), x_top,
                                   max_iter=cfg.gp_ei_polish_iter)
        x_new = res.x if res.f <= neg_ei(x_top) else x_top
        X = np.vstack([X, x_new])
        y = np.append(y, search(x_new))
        if a % cfg.gp_refit_every == 0:
            gp = _fit_gp(X, y, derive_seed(seed, "gp.fit", a))
            refits.append(a)
        else:
            gp.update(X, y)
    polish = PlainEvaluator(dgp, cfg.gp_polish_mc, params, derive_seed(seed, "gp.polish"), ledger,
                            "gp.polish")
    res, est = _polish(polish, X[int(np.argmin(y))], cfg)
    return _solution(res.x, est, ledger, {"polish_start": X[int(np.argmin(y))],
                                          "n_acquisitions": X.shape[0], "refits": refits,
                                          "search_calls": search.calls, "polish_calls": polish.calls,
                                          "polish_status": res.status})


# --------------------------------------------------------------------------
# CEM-SO


def run_cem_so(dgp, params=None, cfg=None, seed=0, ledger=None):
    """Cross-entropy search on plain estimates, then a polish at four times the budget."""
    cfg, params, ledger = _defaults(cfg, params, ledger)
    search = PlainEvaluator(dgp, cfg.cem_mc, params, derive_seed(seed, "cem.eval"), ledger, "cem.search")
    cem = cem_optimize(search, n_iters=cfg.cem_iters, pop_size=cfg.cem_pop, elite_frac=cfg.cem_elite,
                       smoothing=cfg.cem_smoothing, seed=derive_seed(seed, "cem"))
    start = feasible_project(DECISION_BOX.clip(cem.mean))
    polish = PlainEvaluator(dgp, cfg.cem_polish_mc, params, derive_seed(seed, "cem.polish"), ledger,
                            "cem.polish")
    res, est = _polish(polish, start, cfg)
    return _solution(res.x, est, ledger, {"polish_start": start, "search_calls": search.calls,
                                          "polish_calls": polish.calls,
                                          "n_elite": int(np.ceil(cfg.cem_pop * cfg.cem_elite - 1e-12)),
                                          "polish_status": res.status})


# --------------------------------------------------------------------------
# SGD-CVaR


class _MiniBatchGradient:
    """Finite-difference gradient of the spectral risk of one fresh mini-batch."""

    def __init__(self, dgp, params, batch, step, ledger, line):
        self.dgp, self.params, self.batch, self.step = dgp, params, batch, step
        self.ledger, self.line = ledger, line
        self.calls = 0

    def __call__(self, x, rng):
        block = self.dgp.sample(x, self.batch, seed=rng)
        self.ledger.charge(self.batch, self.line)
        self.calls += 1

        def batch_risk(xx):
            scen = block if np.array_equal(xx, block.decision) else block.at(xx)
            return spectral_risk(self.dgp.cost(scen, xx), self.params).total

        return fd_gradient_crn(batch_risk, x, step=self.step)


def run_sgd_cvar(dgp, params=None, cfg=None, seed=0, ledger=None):
    """Two Adam warm chains, a longer fine chain from the better one, then a polish."""
    cfg, params, ledger = _defaults(cfg, params, ledger)
    grad = _MiniBatchGradient(dgp, params, cfg.sgd_batch, cfg.fd_step, ledger, "sgd.chains")
    starts = maximin_lhd(cfg.sgd_warm_chains, seed=derive_seed(seed, "sgd.starts"))
    warm = [adam_optimize(grad, x0, cfg.sgd_warm_iters, lr0=cfg.sgd_lr0, seed=derive_seed(seed, "sgd.warm", c))
            for c, x0 in enumerate(starts)]
    common = derive_seed(seed, "sgd.rescore")
    scores = []
    for x in warm:
        scores.append(oracle_evaluate(x, dgp, cfg.sgd_final_mc, params, seed=common).total)
        ledger.charge(cfg.sgd_final_mc, "sgd.rescore")
    x_fine = adam_optimize(grad, warm[int(np.argmin(scores))], cfg.sgd_fine_iters, lr0=cfg.sgd_lr0,
                           seed=derive_seed(seed, "sgd.fine"))
    polish = PlainEvaluator(dgp, cfg.sgd_polish_mc, params, derive_seed(seed, "sgd.polish"), ledger,
                            "sgd.polish")
    res, est = _polish(polish, x_fine, cfg)
    return _solution(res.x, est, ledger, {"polish_start": x_fine, "gradient_batches": grad.calls, "warm_scores": scores,
                                          "polish_calls": polish.calls, "polish_status": res.status})


# --------------------------------------------------------------------------
# KDE-SO


def run_kde_so(dgp, params=None, cfg=None, seed=0, ledger=None):
    """DE plus multi-start quasi-Newton on a decision-weighted kernel surrogate."""
    cfg, params, ledger = _defaults(cfg, params, ledger)
    X = maximin_lhd(cfg.kde_train, seed=derive_seed(seed, "kde.lhd"))
    W = dgp.sample_each(X, seed=derive_seed(seed, "kde.draws"))
    ledger.charge(cfg.kde_train, "kde.train")
    model = DecisionKernelSampler(bandwidth=cfg.kde_bandwidth).fit(X, W)
    sur_seed = derive_seed(seed, "kde.surrogate")

    def surrogate(x):
        return kde_surrogate_risk(model, x, cfg.kde_mc, params, dgp.cost, seed=sur_seed).total

    init = maximin_lhd(cfg.kde_de_pop, seed=derive_seed(seed, "kde.de.init"))
    de = de_optimize(surrogate, init, n_iters=cfg.kde_de_iters, seed=derive_seed(seed, "kde.de"))
    order = np.argsort(de.scores, kind="stable")
    starts = []
    for i in order:
        if all(np.max(np.abs(de.population[i] - s)) > 1e-9 for s in starts):
            starts.append(de.population[i])
        if len(starts) == cfg.kde_starts:
            break
    runs = [bounded_quasi_newton(surrogate, lambda x: fd_gradient_crn(surrogate, x, step=cfg.fd_step), s,
                                 max_iter=cfg.polish_maxit) for s in starts]
    best = min(runs, key=lambda r: r.f)
    est = oracle_evaluate(best.x, dgp, cfg.kde_final_mc, params, seed=derive_seed(seed, "kde.final"))
    ledger.charge(cfg.kde_final_mc, "kde.final")
    return _solution(best.x, est, ledger, {"surrogate_f": best.f, "n_starts": len(runs),
                                           "de_best": de.best_f})


RUNNERS = {"GP-BO": run_gp_bo, "CEM-SO": run_cem_so, "SGD-CVaR": run_sgd_cvar, "KDE-SO": run_kde_so}
