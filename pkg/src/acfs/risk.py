"""Empirical spectral-risk estimators.

The spectral risk of a cost sample is ``mean + lambda * CVaR_alpha``. CVaR
is computed as a sorted-tail average with fractional weight on the VaR
order statistic, which coincides with the minimum of the discrete
Rockafellar-Uryasev objective for every ``alpha`` and sample size.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, as_generator, check_alpha, check_costs, check_positive_int


@dataclass(frozen=True)
class RiskParams:
    """CVaR weight ``lam`` (lambda >= 0) and confidence level ``alpha``."""

    lam: float = 0.70
    alpha: float = 0.95

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        check_alpha(self.alpha, allow_zero=False)


@dataclass(frozen=True)
class RiskEstimate:
    total: float
    expected_cost: float
    cvar: float
    n_draws: int


def empirical_cvar(costs, alpha):
    """Empirical CVaR at level ``alpha`` of a cost sample.

    With ``m = n * (1 - alpha)`` the worst ``floor(m)`` costs receive unit
    weight and the next order statistic receives the fractional remainder,
    all divided by ``m``.

    Parameters
    ----------
    costs : array-like of float
        Non-empty cost sample.
    alpha : float
        Confidence level in ``[0, 1)``. ``alpha = 0`` gives the mean.

    Returns
    -------
    float
    """
    z = check_costs(costs)
    alpha = check_alpha(alpha)
    n = z.size
    m = n * (1.0 - alpha)
    desc = np.sort(z)[::-1]
    k = int(np.floor(m))
    frac = m - k
    # guard against m landing a hair under an integer
    if 1.0 - frac < 1e-12:
        k, frac = k + 1, 0.0
    k = min(k, n)
    total = desc[:k].sum()
    if frac > 0 and k < n:
        total += frac * desc[k]
    return float(total / m)


def ru_objective(costs, alpha, tau):
    """Discrete Rockafellar-Uryasev objective ``tau + E[(Z - tau)+] / (1 - alpha)``.

    ``tau`` may be an array, in which case the objective is evaluated at
    every entry.
    """
    z = check_costs(costs)
    tau = np.asarray(tau, dtype=float)
    excess = np.maximum(z[None, :] - tau.reshape(-1, 1), 0.0).mean(axis=1)
    out = tau.reshape(-1) + excess / (1.0 - alpha)
    return out.reshape(tau.shape)


def spectral_risk(costs, params):
    """Mean plus ``params.lam`` times CVaR of the cost sample."""
    z = check_costs(costs)
    ec = float(z.mean())
    cv = empirical_cvar(z, params.alpha)
    return RiskEstimate(ec + params.lam * cv, ec, cv, int(z.size))


def oracle_evaluate(x, dgp, n, params, seed=None, antithetic=False, ledger=None):
    """Score decision ``x`` with ``n`` direct draws from the true process.

    Parameters
    ----------
    x : array-like, shape (6,)
        Feasible decision.
    dgp : object
        Data-generating process exposing ``sample(x, n, seed, antithetic)``
        and ``cost(scenarios, x)``.
    n : int
        Number of scenario draws (even when ``antithetic``).
    params : RiskParams
    seed : int, Generator or None
    antithetic : bool
    ledger : OracleLedger, optional
        Charged ``n`` scenario draws.

    Returns
    -------
    RiskEstimate
    """
    n = check_positive_int(n, "n", minimum=2 if not antithetic else 2)
    scen = dgp.sample(x, n, seed=seed, antithetic=antithetic)
    if ledger is not None:
        ledger.charge(n)
    return spectral_risk(dgp.cost(scen, x), params)


def bootstrap_ci(values, statistic="median", n_boot=400, level=0.95, seed=None):
    """Percentile bootstrap interval for the median or mean of ``values``."""
    v = check_costs(values)
    n_boot = check_positive_int(n_boot, "n_boot", minimum=2)
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    funcs = {"median": np.median, "mean": np.mean}
    if statistic not in funcs:
        raise DomainError(f"unknown statistic {statistic!r}")
    rng = as_generator(seed)
    idx = rng.integers(0, v.size, size=(n_boot, v.size))
    stats = funcs[statistic](v[idx], axis=1)
    lo, hi = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)
