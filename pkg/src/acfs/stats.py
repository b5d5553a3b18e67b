"""Paired comparison statistics for replicated optimiser runs.

Differences are ``method_a - method_b`` per replication; with ``a`` the
reference method a negative difference means ``a`` did better.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from ._validation import DomainError, check_costs

EXACT_MAX_N = 12


@dataclass(frozen=True)
class Summary:
    median: float
    sd: float
    q25: float
    q75: float
    n: int
    sd_defined: bool = True

    @property
    def iqr(self):
        return self.q75 - self.q25


def summarize(values):
    """Median, SD (``n - 1`` denominator) and type-7 quartiles.

    For a single value the SD is undefined; it is reported as 0 with
    ``sd_defined=False``.
    """
    v = check_costs(values)
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    if v.size == 1:
        return Summary(float(med), 0.0, float(q25), float(q75), 1, False)
    return Summary(float(med), float(v.std(ddof=1)), float(q25), float(q75), int(v.size))


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    t_plus: float
    n: int
    method: str
    degenerate: bool = False


def _nonzero(diffs):
    d = np.asarray(diffs, dtype=float).ravel()
    if d.size == 0 or not np.all(np.isfinite(d)):
        raise DomainError("diffs must be a non-empty finite vector")
    return d[d != 0]


def _exact_tail_probs(ranks2, t2):
    """``P(T <= t)`` and ``P(T >= t)`` under the sign-flip null, with doubled integer ranks."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2.astype(int):
        counts[r:] = counts[r:] + counts[:-r]
    probs = counts / counts.sum()
    t2 = int(round(t2))
    return float(probs[: t2 + 1].sum()), float(probs[t2:].sum())


def wilcoxon_signed_rank(diffs, alternative="less", method="auto"):
    """Wilcoxon signed-rank test on paired differences.

    Zeros are dropped and tied ``|d|`` get average ranks. ``method="auto"``
    uses the exact sign-flip distribution for ``n <= 12`` without ties and
    the tie-corrected normal approximation with continuity correction
    otherwise; ``"exact"`` and ``"normal"`` force a path.

    ``alternative="less"`` tests whether differences tend to be negative.
    """
    if alternative not in ("less", "greater", "two_sided"):
        raise DomainError(f"unknown alternative {alternative!r}")
    if method not in ("auto", "exact", "normal"):
        raise DomainError(f"unknown method {method!r}")
    d = _nonzero(diffs)
    if d.size == 0:
        return WilcoxonResult(1.0, 0.0, 0, "degenerate", True)
    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    n = d.size
    ties = np.unique(np.abs(d)).size < n
    if method == "exact" or (method == "auto" and n <= EXACT_MAX_N and not ties):
        # average ranks are multiples of 1/2, so doubling keeps the DP on integers
        p_le, p_ge = _exact_tail_probs(2 * ranks, 2 * t_plus)
        used = "exact"
    else:
        _, counts = np.unique(np.abs(d), return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
        if var <= 0:
            return WilcoxonResult(1.0, t_plus, n, "degenerate", True)
        sd = np.sqrt(var)
        p_le = float(ndtr((t_plus - mean + 0.5) / sd))
        p_ge = float(1.0 - ndtr((t_plus - mean - 0.5) / sd))
        used = "normal"
    if alternative == "less":
        p = p_le
    elif alternative == "greater":
        p = p_ge
    else:
        p = 2.0 * min(p_le, p_ge)
    return WilcoxonResult(min(1.0, p), t_plus, n, used)


def holm_adjust(p_values):
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return p
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DomainError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.minimum(1.0, np.maximum.accumulate(p[order] * (m - np.arange(m))))
    out = np.empty(m)
    out[order] = adj
    return out


@dataclass(frozen=True)
class RankBiserial:
    r: float
    magnitude: float
    degenerate: bool = False


def rank_biserial(diffs):
    """Matched-pairs rank-biserial correlation ``(T+ - T-) / (T+ + T-)``."""
    d = _nonzero(diffs)
    if d.size == 0:
        return RankBiserial(0.0, 0.0, True)
    ranks = rankdata(np.abs(d))
    tp, tm = ranks[d > 0].sum(), ranks[d < 0].sum()
    r = float((tp - tm) / (tp + tm))
    return RankBiserial(r, abs(r))


def win_rate(diffs):
    """Share of strictly negative differences, counting exact ties as half a win."""
    d = np.asarray(diffs, dtype=float).ravel()
    if d.size == 0:
        raise DomainError("diffs must be non-empty")
    return float((np.sum(d < 0) + 0.5 * np.sum(d == 0)) / d.size)
