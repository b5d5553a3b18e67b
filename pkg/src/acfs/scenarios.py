"""Decision-dependent scenario generators and their cost functions.

Two benchmark processes share one sampling recipe: correlated normals
``Z ~ N(0, R(x))`` are pushed through the standard normal CDF and then
through component-wise marginal quantiles, scaled Student-t for DGP1 and
log-normal for DGP2. Scenario blocks remember the independent normals
they were built from, so the same random numbers can be re-mapped at a
nearby decision (common random numbers for finite differences).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._validation import DomainError, as_generator, check_positive_int
from .config import load_constants, subtree

N_DECISION = 6
N_W = 5
ALLOC_CAP = 0.70
ALLOC_SUM = 0.85
BOX_LO = np.zeros(N_DECISION)
BOX_HI = np.array([ALLOC_CAP] * 5 + [1.0])

_PAIRS = [(j, k) for j in range(N_W) for k in range(j + 1, N_W)]
_IU = (np.array([p[0] for p in _PAIRS]), np.array([p[1] for p in _PAIRS]))


# --------------------------------------------------------------------------
# feasibility


def feasible_project(x_raw):
    """Map ``x_raw`` (shape (6,) or (m, 6)) into the feasible set.

    Allocations ``x_1..x_5`` are clamped to ``[0, 0.70]`` and ``x_6`` to
    ``[0, 1]``; if the allocations then sum above 0.85 they are rescaled
    multiplicatively onto the budget face.
    """
    x = np.array(x_raw, dtype=float)
    if x.shape[-1] != N_DECISION:
        raise DomainError(f"decision must have {N_DECISION} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("decision must be finite")
    x = np.clip(x, BOX_LO, BOX_HI)
    s = x[..., :5].sum(axis=-1, keepdims=True)
    over = s > ALLOC_SUM + 1e-12
    scale = np.where(over, ALLOC_SUM / np.where(over, s, 1.0), 1.0)
    x[..., :5] *= scale
    return x


def is_feasible(x, tol=1e-9):
    x = np.asarray(x, dtype=float)
    return bool(
        x.shape[-1] == N_DECISION
        and np.all(np.isfinite(x))
        and np.all(x >= BOX_LO - tol)
        and np.all(x <= BOX_HI + tol)
        and np.all(x[..., :5].sum(axis=-1) <= ALLOC_SUM + tol)
    )


def check_decision(x):
    x = np.asarray(x, dtype=float)
    if x.shape != (N_DECISION,) or not is_feasible(x):
        raise DomainError(f"infeasible decision {x}")
    return x


# --------------------------------------------------------------------------
# quantile functions


def normal_cdf(z):
    return special.ndtr(z)


def normal_ppf(p):
    return special.ndtri(p)


def student_t_ppf(p, nu, tol=1e-10, max_newton=8):
    """Student-t quantile via the inverse regularised incomplete beta.

    For ``p < 1/2`` the quantile is ``-sqrt(nu (1 - z) / z)`` with
    ``z = I^{-1}_{2p}(nu/2, 1/2)``; the upper half follows by symmetry.
    A few Newton steps on the CDF polish the result.
    """
    p, nu = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(nu, dtype=float))
    if np.any((p < 0) | (p > 1)) or np.any(nu <= 0):
        raise DomainError("need p in [0, 1] and nu > 0")
    lower = np.minimum(p, 1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = special.betaincinv(nu / 2.0, 0.5, 2.0 * lower)
        t = -np.sqrt(nu * (1.0 - z) / z)
    t = np.where(lower >= 0.5, 0.0, t)
    if max_newton > 0:
        t = _polish_t(t, lower, nu, tol, max_newton)
    return np.where(p > 0.5, -t, t)


def _t_pdf(t, nu):
    logc = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
    return np.exp(logc - (nu + 1) / 2 * np.log1p(t * t / nu))


def _polish_t(t, target, nu, tol, max_newton):
    ok = np.isfinite(t) & (target > 0) & (target < 0.5)
    if not np.any(ok):
        return t
    t = t.copy()
    tt, pp, vv = t[ok], target[ok], nu[ok]
    for _ in range(max_newton):
        step = (special.stdtr(vv, tt) - pp) / _t_pdf(tt, vv)
        step = np.where(np.isfinite(step), step, 0.0)
        tt = tt - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(tt))):
            break
    t[ok] = tt
    return t


def t_from_normal(z, nu, max_newton=0):
    """``T^{-1}_nu(Phi(z))`` evaluated in the tail nearer to ``z`` for accuracy.

    The inverse incomplete beta alone is accurate to about 1e-11 relative
    in probability, so the Newton polish is off by default on this hot path.
    """
    z = np.asarray(z, dtype=float)
    q = student_t_ppf(normal_cdf(-np.abs(z)), nu, max_newton=max_newton)
    return np.where(z > 0, -q, np.where(z < 0, q, 0.0))


# --------------------------------------------------------------------------
# parameter maps


@dataclass(frozen=True)
class MarginalParams:
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    nu: np.ndarray = None


def correlation_repair(raw, eig_floor=1e-6):
    """Nearest usable correlation matrix by eigenvalue clipping.

    Off-diagonals are clamped into ``[-0.99, 0.99]``; if the smallest
    eigenvalue is below ``eig_floor`` the spectrum is clipped there and the
    result rescaled to unit diagonal. Positive-definite inputs are returned
    unchanged. Accepts a single matrix or a stack ``(m, 5, 5)``.
    """
    a = np.array(raw, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {a.shape}")
    if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-12, rtol=0):
        raise DomainError("correlation input must be symmetric")
    d = a.shape[-1]
    eye = np.eye(d, dtype=bool)
    a = np.where(eye, 1.0, np.clip(a, -0.99, 0.99))
    vals, vecs = np.linalg.eigh(a)
    bad = vals.min(axis=-1) < eig_floor
    if not np.any(bad):
        return a
    fixed = (vecs[bad] * np.maximum(vals[bad], eig_floor)[..., None, :]) @ np.swapaxes(vecs[bad], -1, -2)
    scale = 1.0 / np.sqrt(np.diagonal(fixed, axis1=-2, axis2=-1))
    fixed = fixed * scale[..., :, None] * scale[..., None, :]
    fixed = 0.5 * (fixed + np.swapaxes(fixed, -1, -2))
    fixed[..., eye] = 1.0
    a[bad] = fixed
    return a


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _residual(X):
    return np.maximum(0.0, 1.0 - X[:, :5].sum(axis=1))


def _corr_from_upper(upper):
    m = upper.shape[0]
    R = np.tile(np.eye(N_W), (m, 1, 1))
    R[:, _IU[0], _IU[1]] = upper
    R[:, _IU[1], _IU[0]] = upper
    return R


def _dgp1_raw(X):
    x1, x2, x3, x4, x5, x6 = X.T
    x0 = _residual(X)
    mu = np.stack([
        2.10 - 1.50 * x6 - 1.10 * x1 + 1.20 * x0 + 0.75 * x2 * x3 - 0.55 * x1 * x6**2,
        2.30 - 1.30 * x1 - 1.70 * x3 + 0.95 * x0 - 0.65 * x6**2 + 0.45 * x2**2,
        1.90 - 1.50 * x2 - 1.05 * x6 + 0.75 * x0 + 0.55 * x1 * x2 - 0.35 * x3 * x6,
        1.70 - 1.20 * x4 - 0.90 * x6 + 0.60 * x0 + 0.40 * x3 * x5 - 0.30 * x2 * x4,
        1.50 - 1.00 * x5 - 0.80 * x6 + 0.50 * x0 + 0.35 * x1 * x4 - 0.25 * x3**2,
    ], axis=1)
    sigma = np.stack([
        0.20 + 0.75 * (1 - x6) * (1 - x1) + 0.30 * x0,
        0.24 + 0.65 * (1 - x3) + 0.28 * (1 - x6) + 0.22 * x0,
        0.22 + 0.60 * (1 - x2) + 0.20 * (1 - x6) + 0.16 * x0,
        0.18 + 0.50 * (1 - x4) + 0.18 * (1 - x6) + 0.14 * x0,
        0.16 + 0.45 * (1 - x5) + 0.15 * (1 - x6) + 0.12 * x0,
    ], axis=1)
    nu = np.stack([
        3.0 + 2.5 * x6,
        3.0 + 2.0 * x3,
        3.0 + 1.5 * x2,
        3.5 + 2.0 * x4,
        3.5 + 1.5 * x5,
    ], axis=1)
    # pair order matches _PAIRS: 12 13 14 15 23 24 25 34 35 45
    upper = np.stack([
        0.55 + 0.28 * (1 - x6),
        0.20 + 0.28 * (1 - x1),
        0.15 + 0.20 * (1 - x2),
        0.10 + 0.18 * (1 - x3),
        0.50 + 0.32 * (1 - 2 * x2),
        0.20 + 0.22 * (1 - x4),
        0.15 + 0.18 * (1 - x5),
        0.25 + 0.20 * (1 - x3),
        0.18 + 0.16 * (1 - x4),
        0.30 + 0.25 * (1 - 2 * x5),
    ], axis=1)
    return mu, sigma, nu, _corr_from_upper(upper)


def _vec(table, stem):
    return np.array([table[f"{stem}{j}"] for j in range(1, N_W + 1)], dtype=float)


def _pairvec(table, stem):
    return np.array([table[f"{stem}{j + 1}{k + 1}"] for j, k in _PAIRS], dtype=float)


def _dgp2_raw(X, consts, tables=None):
    if tables is None:
        tables = subtree(consts, "dgp2.mu"), subtree(consts, "dgp2.sigma"), subtree(consts, "dgp2.corr")
    mu_t, sg_t, cr_t = tables
    alloc = X[:, :5]
    x6 = X[:, 5:6]
    total = alloc.sum(axis=1, keepdims=True)
    mu = (_vec(mu_t, "m0_") + _vec(mu_t, "own_") * alloc + _vec(mu_t, "x6_") * x6
          + _vec(mu_t, "tot_") * total + _vec(mu_t, "int_") * alloc * x6)
    sigma = np.maximum(
        sg_t["floor"],
        _vec(sg_t, "base_") + _vec(sg_t, "slope_") * (1 - alloc) + _vec(sg_t, "cross_") * x6,
    )
    upper = _pairvec(cr_t, "b") + _pairvec(cr_t, "c") * (1 - x6)
    return mu, sigma, _corr_from_upper(upper)


def dgp1_params(x):
    """DGP1 marginal means, scales, degrees of freedom and repaired correlation."""
    X, single = _as_batch(x)
    mu, sigma, nu, R = _dgp1_raw(X)
    R = correlation_repair(R)
    if single:
        return MarginalParams(mu[0], sigma[0], R[0], nu[0])
    return MarginalParams(mu, sigma, R, nu)


def dgp2_params(x, constants=None):
    """DGP2 log-normal locations, scales and repaired correlation."""
    consts = load_constants() if constants is None else constants
    X, single = _as_batch(x)
    mu, sigma, R = _dgp2_raw(X, consts)
    R = correlation_repair(R)
    if single:
        return MarginalParams(mu[0], sigma[0], R[0])
    return MarginalParams(mu, sigma, R)


# --------------------------------------------------------------------------
# scenario blocks


@dataclass(frozen=True, eq=False)
class ScenarioMatrix:
    """An ``n x 5`` block of draws of W taken at ``decision``.

    ``normals`` are the independent standard normals (before the Cholesky
    factor of ``R(x)``) the block was generated from; ``at`` re-maps the
    same numbers through the process at another decision.
    """

    w: np.ndarray
    z: np.ndarray
    normals: np.ndarray
    decision: np.ndarray
    seed: object
    antithetic: bool
    dgp: "DgpSpec" = field(repr=False)

    @property
    def n(self):
        return self.w.shape[0]

    def at(self, x):
        return self.dgp.from_normals(self.normals, x, seed=self.seed, antithetic=self.antithetic)


def _draw_normals(n, rng, antithetic):
    if antithetic:
        if n % 2:
            raise DomainError(f"antithetic sampling needs an even n, got {n}")
        return rng.standard_normal((n // 2, N_W))
    return rng.standard_normal((n, N_W))


@dataclass(frozen=True)
class DgpSpec:
    """One benchmark process: its kind, coefficient table and overrides.

    ``sigma_scale`` multiplies every marginal scale; 0 collapses the process
    onto a point mass (used to build deterministic test oracles).
    """

    kind: str
    constants: dict = field(default=None, repr=False, compare=False)
    sigma_scale: float = 1.0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("DGP1", "DGP2"):
            raise DomainError(f"unknown DGP kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        consts = load_constants() if self.constants is None else dict(self.constants)
        bad = [k for k, v in consts.items() if isinstance(v, float) and not np.isfinite(v)]
        if bad:
            raise DomainError(f"non-finite coefficients: {bad}")
        object.__setattr__(self, "constants", consts)
        object.__setattr__(self, "coefficients", _compile_coefficients(consts))
        if self.kind == "DGP2":
            object.__setattr__(self, "_dgp2_tables", (
                subtree(consts, "dgp2.mu"), subtree(consts, "dgp2.sigma"), subtree(consts, "dgp2.corr")))

    @property
    def name(self):
        return self.kind.lower()

    # parameters -----------------------------------------------------------

    def raw_params(self, X):
        X, _ = _as_batch(X)
        if self.kind == "DGP1":
            mu, sigma, nu, R = _dgp1_raw(X)
        else:
            mu, sigma, R = _dgp2_raw(X, self.constants, self._dgp2_tables)
            nu = None
        return mu, sigma * self.sigma_scale, nu, correlation_repair(R)

    def params(self, x):
        mu, sigma, nu, R = self.raw_params(x)
        return MarginalParams(mu[0], sigma[0], R[0], None if nu is None else nu[0])

    # sampling -------------------------------------------------------------

    def _marginals(self, z, mu, sigma, nu):
        if self.kind == "DGP1":
            return mu + sigma * t_from_normal(z, nu)
        # log-normal quantile of Phi(z) is exp(mu + sigma * z) exactly
        return np.exp(mu + sigma * z)

    def from_normals(self, normals, x, seed=None, antithetic=False):
        x = check_decision(x)
        mu, sigma, nu, R = self.raw_params(x)
        L = np.linalg.cholesky(R[0])
        z = normals @ L.T
        if antithetic:
            z = np.vstack([z, -z])
        w = self._marginals(z, mu[0], sigma[0], None if nu is None else nu[0])
        return ScenarioMatrix(w, z, normals, x.copy(), seed, bool(antithetic), self)

    def sample(self, x, n, seed=None, antithetic=False):
        """Draw ``n`` scenarios at decision ``x`` (pure in ``(x, n, seed, antithetic)``)."""
        n = check_positive_int(n, "n")
        rng = as_generator(seed)
        normals = _draw_normals(n, rng, antithetic)
        return self.from_normals(normals, x, seed=seed if not isinstance(seed, np.random.Generator) else None,
                                 antithetic=antithetic)

    def sample_each(self, X, seed=None):
        """One independent draw of W at every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not is_feasible(X):
            raise DomainError("all decisions must be feasible")
        rng = as_generator(seed)
        mu, sigma, nu, R = self.raw_params(X)
        L = np.linalg.cholesky(R)
        z = np.einsum("mij,mj->mi", L, rng.standard_normal((X.shape[0], N_W)))
        return self._marginals(z, mu, sigma, nu)

    # costs ----------------------------------------------------------------

    def cost(self, scenarios, x):
        if self.kind == "DGP1":
            return cost_dgp1(scenarios, x, self)
        return cost_dgp2(scenarios, x, self)

    def cost_components(self, scenarios, x):
        x, W = _cost_inputs(scenarios, x)
        if self.kind == "DGP1":
            return _dgp1_components(W, x, self.coefficients["dgp1"])
        return _dgp2_components(W, x, self.coefficients["dgp2"])


_DEFAULTS = {}


def _default_spec(kind):
    if kind not in _DEFAULTS:
        _DEFAULTS[kind] = DgpSpec(kind)
    return _DEFAULTS[kind]


def sample_dgp1(x, n, seed=None, antithetic=False, spec=None):
    return (spec or _default_spec("DGP1")).sample(x, n, seed=seed, antithetic=antithetic)


def sample_dgp2(x, n, seed=None, antithetic=False, spec=None):
    return (spec or _default_spec("DGP2")).sample(x, n, seed=seed, antithetic=antithetic)


# --------------------------------------------------------------------------
# cost functions


def _cost_inputs(scenarios, x):
    x = np.asarray(x, dtype=float)
    if isinstance(scenarios, ScenarioMatrix):
        if not np.array_equal(scenarios.decision, x):
            raise DomainError("scenarios were drawn at a different decision")
        W = scenarios.w
    else:
        W = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if W.shape[-1] != N_W:
        raise DomainError(f"scenarios must have {N_W} columns")
    return x, W


def _compile_coefficients(consts):
    """Turn the flat coefficient table into arrays used by the cost code."""
    t1 = subtree(consts, "dgp1")
    t2 = subtree(consts, "dgp2")
    coef = {}
    if t1:
        coef["dgp1"] = {
            "a": _vec(t1, "c_dmg.a"),
            "p": _vec(t1, "c_hp.p"),
            "t0": _vec(t1, "c_hp.t0_"),
            "t1": _vec(t1, "c_hp.t1_"),
            "kappa": t1["c_ep.kappa"], "beta": t1["c_ep.beta"],
            "gamma": t1["c_ep.gamma"], "logcap": np.log(t1["c_ep.cap"]),
            "d": _pairvec(t1, "c_del.d"),
            "q": t1["c_ac.q"],
        }
    if t2:
        coef["dgp2"] = {
            "k0": _vec(t2, "cap.k0_"), "k1": _vec(t2, "cap.k1_"), "k2": _vec(t2, "cap.k2_"),
            "h": _vec(t2, "c_hold.h"), "s": _vec(t2, "c_short.s"),
            "p": _vec(t2, "c_proc.p"), "expo": t2["c_proc.exponent"],
            "kappa": t2["c_coord.kappa"], "q2": t2["c_setup.q2"],
        }
    return coef


def _dgp1_components(W, x, c):
    Wp = np.maximum(W, 0.0)
    alloc, x6 = x[:5], x[5]
    dmg = (c["a"] * Wp**2 * (1.0 - alloc)).sum(axis=1)
    hp = (c["p"] * np.maximum(W - (c["t0"] + c["t1"] * x6), 0.0)).sum(axis=1)
    arg = np.minimum(c["beta"] * W.max(axis=1) - c["gamma"], c["logcap"])
    ep = c["kappa"] * np.exp(arg)
    dl = (c["d"] * Wp[:, _IU[0]] * Wp[:, _IU[1]]).sum(axis=1)
    ac = np.full(W.shape[0], c["q"] * float(x @ x))
    return {"dmg": dmg, "hp": hp, "ep": ep, "del": dl, "ac": ac}


def _dgp2_components(W, x, c):
    alloc, x6 = x[:5], x[5]
    cap = c["k0"] + c["k1"] * alloc + c["k2"] * x6
    hold = (c["h"] * np.maximum(cap - W, 0.0)).sum(axis=1)
    short = (c["s"] * np.maximum(W - cap, 0.0)).sum(axis=1)
    proc = (c["p"] * np.maximum(W, 0.0) ** c["expo"]).sum(axis=1)
    coord = c["kappa"] * alloc.sum() * W.mean(axis=1)
    setup = np.full(W.shape[0], c["q2"] * float(x @ x))
    return {"hold": hold, "short": short, "proc": proc, "coord": coord, "setup": setup}


def capacity_dgp2(x, spec=None):
    """Decision-dependent capacity thresholds of the DGP2 hinge costs."""
    c = (spec or _default_spec("DGP2")).coefficients["dgp2"]
    x = np.asarray(x, dtype=float)
    return c["k0"] + c["k1"] * x[:5] + c["k2"] * x[5]


def cost_dgp1(scenarios, x, spec=None):
    """Per-scenario DGP1 cost: damage + hinge + exponential + cross + allocation."""
    x, W = _cost_inputs(scenarios, x)
    c = (spec or _default_spec("DGP1")).coefficients["dgp1"]
    return sum(_dgp1_components(W, x, c).values())


def cost_dgp2(scenarios, x, spec=None):
    """Per-scenario DGP2 cost: holding + shortage + procurement + coordination + setup."""
    x, W = _cost_inputs(scenarios, x)
    c = (spec or _default_spec("DGP2")).coefficients["dgp2"]
    return sum(_dgp2_components(W, x, c).values())


# --------------------------------------------------------------------------
# common random numbers


class ScenarioCache:
    """Single-writer cache of one scenario block per ``(iterate, seed)`` key.

    ``get`` returns the cached block when the key is unchanged and
    generates (and charges the ledger for) a fresh block otherwise.
    ``invalidate`` drops the block, e.g. when a quasi-Newton iterate is
    accepted.
    """

    def __init__(self, dgp, n, antithetic=True, seed=0, ledger=None):
        self.dgp = dgp
        self.n = check_positive_int(n, "n", minimum=2)
        self.antithetic = antithetic
        self.seed = int(seed)
        self.ledger = ledger
        self.generations = 0
        self._key = None
        self._block = None

    def get(self, x, key):
        if self._block is None or key != self._key:
            rng = np.random.default_rng([self.seed, int(key)])
            self._block = self.dgp.sample(x, self.n, seed=rng, antithetic=self.antithetic)
            self._key = key
            self.generations += 1
            if self.ledger is not None:
                self.ledger.charge(self.n)
        return self._block

    @property
    def current(self):
        return self._block

    def invalidate(self):
        self._key = None
        self._block = None


def crn_scenario_cache(x, dgp, n, seed, antithetic=True, key=0, cache=None, ledger=None):
    """Fetch the scenario block for ``(key, seed)``, creating the cache if needed."""
    cache = cache or ScenarioCache(dgp, n, antithetic=antithetic, seed=seed, ledger=ledger)
    return cache.get(x, key), cache
