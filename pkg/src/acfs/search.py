"""Optimisation primitives shared by ACFS and the competitor methods.

Everything here works on 6-vectors inside a box and, optionally, a
projection that maps box points onto the feasible set. All routines are
deterministic given their seed.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from ._validation import DomainError, OptimizationError, as_generator, check_positive_int
from .scenarios import BOX_HI, BOX_LO, feasible_project


@dataclass(frozen=True)
class BoxBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DomainError("bounds need matching shapes and lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


DECISION_BOX = BoxBounds(BOX_LO, BOX_HI)


def _projector(bounds, project):
    def proj(x):
        x = bounds.clip(x)
        return project(x) if project is not None else x
    return proj


# --------------------------------------------------------------------------
# designs


def maximin_lhd(n_points, bounds=DECISION_BOX, seed=None, n_restarts=10, project=feasible_project):
    """Best of ``n_restarts`` random Latin hypercubes by minimum pairwise distance.

    Distances are measured in the unit cube. Points are passed through
    ``project`` afterwards (``None`` keeps the raw design).
    """
    n_points = check_positive_int(n_points, "n_points")
    n_restarts = check_positive_int(n_restarts, "n_restarts")
    rng = as_generator(seed)
    d = bounds.lo.size
    best, best_crit = None, -np.inf
    for _ in range(n_restarts):
        strata = np.argsort(rng.random((d, n_points)), axis=1).T
        U = (strata + rng.random((n_points, d))) / n_points
        crit = pdist(U).min() if n_points > 1 else np.inf
        if crit > best_crit:
            best, best_crit = U, crit
    X = bounds.lo + best * bounds.width
    return project(X) if project is not None else X


def min_pairwise_distance(X, bounds=DECISION_BOX):
    U = (np.asarray(X) - bounds.lo) / np.where(bounds.width > 0, bounds.width, 1.0)
    return pdist(U).min()


# --------------------------------------------------------------------------
# cross-entropy method


@dataclass
class CemResult:
    mean: np.ndarray
    sd: np.ndarray
    best_x: np.ndarray
    best_f: float
    population: np.ndarray
    scores: np.ndarray
    best_history: list = field(default_factory=list)
    n_evals: int = 0


def cem_optimize(objective, bounds=DECISION_BOX, n_iters=12, pop_size=55, elite_frac=0.15,
                 smoothing=0.60, seed=None, init_mean=None, init_sd=None,
                 project=feasible_project, max_retries=20):
    """Cross-entropy minimisation with a smoothed diagonal Gaussian.

    Each iteration samples ``pop_size`` candidates, keeps the
    ``ceil(pop_size * elite_frac)`` lowest scores and moves mean and SD to
    ``smoothing * elite + (1 - smoothing) * previous``. Candidates with a
    non-finite score are redrawn up to ``max_retries`` times.
    """
    n_iters = check_positive_int(n_iters, "n_iters")
    pop_size = check_positive_int(pop_size, "pop_size")
    n_elite = int(np.ceil(pop_size * elite_frac - 1e-12))
    if n_elite < 1 or n_elite > pop_size:
        raise DomainError("pop_size * elite_frac must be at least 1 and at most pop_size")
    rng = as_generator(seed)
    proj = _projector(bounds, project)
    mean = bounds.center.copy() if init_mean is None else np.asarray(init_mean, dtype=float).copy()
    sd = 0.25 * bounds.width if init_sd is None else np.broadcast_to(init_sd, mean.shape).astype(float)
    best_x, best_f = None, np.inf
    history = []
    n_evals = 0
    pop = scores = None
    for _ in range(n_iters):
        pop = np.empty((pop_size, mean.size))
        scores = np.empty(pop_size)
        for i in range(pop_size):
            for _attempt in range(max_retries + 1):
                cand = proj(mean + sd * rng.standard_normal(mean.size))
                val = float(objective(cand))
                n_evals += 1
                if np.isfinite(val):
                    break
            else:
                raise OptimizationError("objective kept returning non-finite values")
            pop[i], scores[i] = cand, val
        elite = pop[np.argsort(scores, kind="stable")[:n_elite]]
        mean = smoothing * elite.mean(axis=0) + (1 - smoothing) * mean
        sd = smoothing * elite.std(axis=0) + (1 - smoothing) * sd
        i_best = int(np.argmin(scores))
        if scores[i_best] < best_f:
            best_x, best_f = pop[i_best].copy(), float(scores[i_best])
        history.append(best_f)
    return CemResult(mean, sd, best_x, best_f, pop, scores, history, n_evals)


# --------------------------------------------------------------------------
# differential evolution


@dataclass
class DeResult:
    population: np.ndarray
    scores: np.ndarray
    best_history: list = field(default_factory=list)
    n_evals: int = 0

    @property
    def best_x(self):
        return self.population[int(np.argmin(self.scores))]

    @property
    def best_f(self):
        return float(self.scores.min())


def de_optimize(objective, init_pop, n_iters=55, F=0.7, CR=0.9, seed=None, scores=None,
                bounds=DECISION_BOX, project=feasible_project):
    """DE/current-to-best/1/bin with greedy (incumbent-on-tie) selection."""
    pop = np.array(init_pop, dtype=float)
    n_pop, d = pop.shape
    if n_pop < 4:
        raise DomainError("differential evolution needs a population of at least 4")
    rng = as_generator(seed)
    proj = _projector(bounds, project)
    n_evals = 0
    if scores is None:
        scores = np.array([float(objective(x)) for x in pop])
        n_evals += n_pop
    else:
        scores = np.array(scores, dtype=float)
    history = [float(scores.min())]
    for _ in range(n_iters):
        best = pop[int(np.argmin(scores))]
        trials = np.empty_like(pop)
        for i in range(n_pop):
            r1, r2 = rng.choice(n_pop - 1, size=2, replace=False)
            r1 += r1 >= i
            r2 += r2 >= i
            mutant = pop[i] + F * (best - pop[i]) + F * (pop[r1] - pop[r2])
            cross = rng.random(d) < CR
            cross[rng.integers(d)] = True
            trials[i] = proj(np.where(cross, mutant, pop[i]))
        trial_scores = np.array([float(objective(x)) for x in trials])
        n_evals += n_pop
        better = trial_scores < scores
        pop[better] = trials[better]
        scores[better] = trial_scores[better]
        history.append(float(scores.min()))
    return DeResult(pop, scores, history, n_evals)


# --------------------------------------------------------------------------
# gradients


def fd_gradient_crn(fun, x, step=1e-4, project=feasible_project, bounds=DECISION_BOX):
    """Central-difference gradient of a deterministic function.

    ``fun`` must be deterministic in ``x``; for stochastic objectives bind
    it to one cached scenario block first so every probe sees the same
    random numbers. Probes are projected; the difference is divided by the
    step that survives projection, and a one-sided difference is used when
    one side collapses.
    """
    if step <= 0:
        raise DomainError("step must be positive")
    x = np.asarray(x, dtype=float)
    proj = _projector(bounds, project)
    f0 = None
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        xp, xm = proj(x + e), proj(x - e)
        hp, hm = xp[j] - x[j], x[j] - xm[j]
        if hp > 0 and hm > 0:
            g[j] = (fun(xp) - fun(xm)) / (hp + hm)
        elif hp > 0 or hm > 0:
            if f0 is None:
                f0 = fun(x)
            g[j] = (fun(xp) - f0) / hp if hp > 0 else (f0 - fun(xm)) / hm
    return g


# --------------------------------------------------------------------------
# bounded limited-memory quasi-Newton


@dataclass
class QnResult:
    x: np.ndarray
    f: float
    n_iter: int
    n_fev: int
    status: str


def _two_loop(q, pairs, free):
    alphas = []
    qq = q * free
    for s, y in reversed(pairs):
        sf, yf = s * free, y * free
        sy = sf @ yf
        if sy <= 1e-300:
            alphas.append(None)
            continue
        a = (sf @ qq) / sy
        alphas.append(a)
        qq = qq - a * yf
    s, y = pairs[-1]
    sf, yf = s * free, y * free
    yy = yf @ yf
    r = qq * ((sf @ yf) / yy if yy > 0 and sf @ yf > 0 else 1.0)
    for (s, y), a in zip(pairs, reversed(alphas)):
        if a is None:
            continue
        sf, yf = s * free, y * free
        b = (yf @ r) / (sf @ yf)
        r = r + sf * (a - b)
    return r


def bounded_quasi_newton(fun, grad, x0, bounds=DECISION_BOX, project=feasible_project, max_iter=80,
                         memory=10, gtol=1e-6, xtol=1e-9, ftol=2.2e-9, max_ls=30, on_accept=None,
                         first_step=0.1):
    """Projected limited-memory BFGS for box (plus projection) constraints.

    Coordinates sitting on a box bound with the gradient pushing outward
    are frozen; the L-BFGS direction on the remaining coordinates is
    followed along the projection arc with a backtracking Armijo search.
    Stops on ``max_iter``, projected-gradient norm ``<= gtol``, step
    ``<= xtol`` or relative decrease ``<= ftol``.

    ``on_accept(x, k)`` is called after each accepted step, before the
    objective and gradient are re-evaluated at the new iterate; stochastic
    callers use it to refresh their common-random-number block.
    """
    proj = _projector(bounds, project)
    x = proj(np.asarray(x0, dtype=float))
    f = float(fun(x))
    n_fev = 1
    if not np.isfinite(f):
        raise OptimizationError("objective is not finite at the starting point")
    g = np.asarray(grad(x), dtype=float)
    pairs = deque(maxlen=memory)
    status = "max_iter"
    lo, hi = bounds.lo, bounds.hi
    it = 0
    for it in range(1, max_iter + 1):
        pg = x - proj(x - g)
        if np.max(np.abs(pg)) <= gtol:
            status = "gtol"
            it -= 1
            break
        free = ~(((x <= lo + 1e-12) & (g > 0)) | ((x >= hi - 1e-12) & (g < 0)))
        accepted = None
        for use_memory in ((True, False) if pairs else (False,)):
            if use_memory:
                d = -_two_loop(g, list(pairs), free.astype(float))
                t = 1.0
            else:
                d = -(g * free)
                t = min(1.0, first_step / max(np.max(np.abs(d)), 1e-300))
            if g @ d >= 0:
                continue
            for _ in range(max_ls):
                xt = proj(x + t * d)
                s = xt - x
                if np.max(np.abs(s)) <= xtol:
                    break
                ft = float(fun(xt))
                n_fev += 1
                slope = g @ s
                if np.isfinite(ft) and slope < 0 and ft <= f + 1e-4 * slope:
                    accepted = (xt, ft, s)
                    break
                t *= 0.5
            if accepted is not None:
                break
            pairs.clear()
        if accepted is None:
            status = "linesearch"
            it -= 1
            break
        xt, ft, s = accepted
        decrease = f - ft
        if on_accept is not None:
            on_accept(xt, it)
            ft = float(fun(xt))
            n_fev += 1
        gt = np.asarray(grad(xt), dtype=float)
        y = gt - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y))
        x, f, g = xt, ft, gt
        if np.max(np.abs(s)) <= xtol:
            status = "xtol"
            break
        if decrease <= ftol * max(abs(f), abs(ft), 1.0):
            status = "ftol"
            break
    return QnResult(x, f, it, n_fev, status)


# --------------------------------------------------------------------------
# Adam


def adam_optimize(gradient, x0, n_iters, lr0=0.05, decay=0.01, seed=None, bounds=DECISION_BOX,
                  project=feasible_project, beta1=0.9, beta2=0.999, eps=1e-8):
    """Projected Adam with learning rate ``lr0 / (1 + decay * t)``.

    ``gradient(x, rng)`` returns a (possibly stochastic) gradient estimate;
    ``rng`` is the optimiser's own stream so runs are reproducible.
    """
    rng = as_generator(seed)
    proj = _projector(bounds, project)
    x = proj(np.asarray(x0, dtype=float))
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, n_iters + 1):
        g = np.asarray(gradient(x, rng), dtype=float)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        lr = lr0 / (1 + decay * t)
        x = proj(x - lr * m_hat / (np.sqrt(v_hat) + eps))
    return x
