"""Cross-sectional significance tests on per-event CARs / CAVs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import AllZeros, EmptyInput, TooFewObservations, ZeroVariance

__all__ = [
    "TestResult",
    "EXACT_CUTOFF",
    "t_test_cross_sectional",
    "t_from_summary",
    "wilcoxon_signed_rank",
    "wilcoxon_null_distribution",
    "boehmer_test",
    "standardize_car",
    "positive_share",
]

EXACT_CUTOFF = 25

T_CROSS_SECTIONAL = "t_cross_sectional"
WILCOXON_EXACT = "wilcoxon_signed_rank_exact"
WILCOXON_NORMAL = "wilcoxon_signed_rank_normal"
BOEHMER = "boehmer"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_effective: int

    __test__ = False  # keep pytest from collecting this as a test class


def _as_array(values):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("no values")
    return arr


def _mean_over_se(values, method):
    v = _as_array(values)
    n = v.size
    if n < 2:
        raise TooFewObservations(f"need at least 2 values, got {n}")
    if np.all(v == v[0]):
        if v[0] == 0:
            return TestResult(0.0, 1.0, method, n)
        raise ZeroVariance("all values identical")
    se = float(np.std(v, ddof=1)) / math.sqrt(n)
    t = float(np.mean(v)) / se
    return TestResult(t, float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 1))), method, n)


def t_test_cross_sectional(values) -> TestResult:
    """Mean over its standard error, two-sided Student-t p with n-1 df.

    An all-zero input is reported as statistic 0, p = 1; any other constant
    input raises :class:`ZeroVariance`.
    """
    return _mean_over_se(values, T_CROSS_SECTIONAL)


def t_from_summary(mean, se, n=None):
    """t-statistic (and optional two-sided p) from a printed mean and SE."""
    t = mean / se
    if n is None:
        return t
    return t, float(2.0 * stats.t.sf(abs(t), n - 1))


def boehmer_test(standardized_cars) -> TestResult:
    """Standardized cross-sectional test on per-event standardized CARs.

    Inputs come from :func:`standardize_car`; the statistic is
    ``mean(SCAR) / (sd(SCAR) / sqrt(n))``, which absorbs event-induced
    variance into the cross-sectional spread.
    """
    return _mean_over_se(standardized_cars, BOEHMER)


def standardize_car(car, residual_stddev, window_length, estimation_n, reference_dev_sum=None, reference_ssd=None):
    """Scale a CAR by its forecast-error standard deviation.

    ``var = s^2 * (L + L^2 / T)`` for the constant-mean model; the market model
    adds ``s^2 * (sum_w (x_t - xbar))^2 / Sxx`` where the sum runs over the
    event window and ``xbar``/``Sxx`` come from the estimation window.
    Returns NaN when the residual scale is zero.
    """
    L, T = window_length, estimation_n
    factor = L + L * L / T
    if reference_dev_sum is not None and reference_ssd:
        factor += reference_dev_sum**2 / reference_ssd
    scale = residual_stddev * math.sqrt(factor)
    if scale == 0:
        return math.nan
    return car / scale


def _doubled_ranks(values):
    nonzero = values[values != 0]
    if nonzero.size == 0:
        raise AllZeros("all values are zero")
    ranks = stats.rankdata(np.abs(nonzero), method="average")
    # average ranks are integers or half-integers, so doubling keeps them exact
    doubled = np.rint(2 * ranks).astype(np.int64)
    return nonzero, ranks, doubled


def wilcoxon_null_distribution(ranks):
    """Exact null distribution of W+ for the given (possibly tied) ranks.

    Counts sign vectors by dynamic programming over doubled ranks, which
    tallies all ``2**n`` assignments. Returns ``(support, probabilities)``
    with support in rank units.
    """
    counts = _sign_counts(np.rint(2 * np.asarray(ranks, float)).astype(np.int64))
    support = np.arange(counts.size) / 2.0
    keep = counts > 0
    return support[keep], counts[keep] / float(counts.sum())


def _sign_counts(doubled):
    """Number of sign vectors reaching each doubled W+ value."""
    counts = np.zeros(int(doubled.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts += shifted
    return counts


def _exact_p(doubled, w2):
    counts = _sign_counts(doubled)
    total = float(2 ** len(doubled))
    lower = counts[: w2 + 1].sum() / total
    upper = counts[w2:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_signed_rank(values, exact_cutoff=EXACT_CUTOFF, continuity=True) -> TestResult:
    """Wilcoxon signed-rank test of zero median.

    Zeros are dropped and ties get average ranks. The p-value is exact when
    at most ``exact_cutoff`` non-zero values remain, otherwise from the normal
    approximation. The statistic is always the signed z-score of W+ (with tie
    variance correction and, if ``continuity``, a 0.5 continuity shift).
    """
    v = _as_array(values)
    nonzero, ranks, doubled = _doubled_ranks(v)
    n = nonzero.size
    w2 = int(doubled[nonzero > 0].sum())
    w = w2 / 2.0
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    d = w - mu
    if continuity:
        d = math.copysign(max(abs(d) - 0.5, 0.0), d)
    z = d / math.sqrt(var) if var > 0 else 0.0

    if n <= exact_cutoff:
        return TestResult(z, _exact_p(doubled, w2), WILCOXON_EXACT, n)
    return TestResult(z, float(min(1.0, 2.0 * stats.norm.sf(abs(z)))), WILCOXON_NORMAL, n)


def positive_share(values) -> float:
    v = _as_array(values)
    return np.count_nonzero(v > 0) / v.size
