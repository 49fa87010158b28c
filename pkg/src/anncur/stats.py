"""Rank correlation, group tests, and outlier capping for timing data.

Everything here is self-contained: the chi-square and Student-t survival
functions are computed from incomplete gamma / beta expansions (series
plus continued fractions) rather than pulled from a stats library, so the
module has no dependency beyond the standard library and results are
reproducible to well below the 1e-10 level.

Conventions:

* Spearman's rho uses average ranks for ties and returns None when either
  side has zero rank variance (the coefficient is undefined there, and a
  silent 0.0 or nan tends to hide bugs downstream).
* Kruskal-Wallis applies the usual tie correction and reports an upper
  chi-square tail probability with k - 1 degrees of freedom.
* Welch's t does not assume equal variances; degrees of freedom follow
  the Welch-Satterthwaite approximation.
* cap_outliers mirrors a common timing clean-up: values above a hard
  limit are treated as interruptions and excluded from the mean/std
  estimate, then every value above mean + k * std is clamped to that
  threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError

_EPS = 1e-15
_FPMIN = 1e-300
_MAX_ITER = 600


class StatsError(DataError):
    """Invalid input to a statistical routine."""


class LengthMismatch(StatsError):
    pass


class TooShort(StatsError):
    pass


class TooFewGroups(StatsError):
    pass


class EmptyGroup(StatsError):
    pass


class BadParams(StatsError):
    pass


class EmptyInput(StatsError):
    pass


class AllAboveHardLimit(StatsError):
    pass


@dataclass(frozen=True)
class TestResult:
    """Outcome of a significance test."""

    statistic: float
    df: float
    p_two_sided: float


@dataclass(frozen=True)
class CapResult:
    """Outcome of cap_outliers: the clamped series and what was done to it."""

    capped: list[float]
    t_max: float
    n_capped: int


# ---------------------------------------------------------------------------
# special functions


def _gamma_p_series(a: float, x: float) -> float:
    # Lower regularized incomplete gamma via its power series; converges
    # quickly for x < a + 1.
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_contfrac(a: float, x: float) -> float:
    # Upper regularized incomplete gamma via a continued fraction
    # (modified Lentz), preferred for x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_sf(x: float, df: float) -> float:
    """Survival function P(X > x) of a chi-square variable with df degrees."""
    if df <= 0 or not math.isfinite(df):
        raise BadParams(f"chi2_sf needs df > 0, got {df}")
    if not math.isfinite(x):
        return 0.0 if x > 0 else 1.0
    if x <= 0:
        return 1.0
    a = 0.5 * df
    half = 0.5 * x
    if half < a + 1.0:
        return 1.0 - _gamma_p_series(a, half)
    return _gamma_q_contfrac(a, half)


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function (modified Lentz).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    # Regularized incomplete beta I_x(a, b).
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf(x: float, df: float) -> float:
    """Survival function P(T > x) of a Student-t variable with df degrees."""
    if df <= 0 or not math.isfinite(df):
        raise BadParams(f"t_sf needs finite df > 0, got {df}")
    if math.isnan(x):
        raise BadParams("t_sf got nan statistic")
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    if x == 0.0:
        return 0.5
    tail = 0.5 * _betainc(0.5 * df, 0.5, df / (df + x * x))
    return tail if x > 0 else 1.0 - tail


# ---------------------------------------------------------------------------
# rank statistics


def _ranks(values: list[float]) -> list[float]:
    # Average ranks (1-based); tied values share the mean of their positions.
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(a: list[float], b: list[float]) -> float | None:
    """Spearman rank correlation of two equal-length series.

    Ties get average ranks.  Returns None when either series is constant
    in rank, i.e. the coefficient is undefined.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"series lengths differ: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise TooShort(f"need at least 2 pairs, got {len(a)}")
    for v in list(a) + list(b):
        if not math.isfinite(v):
            raise BadParams("spearman got a non-finite value")
    ra = _ranks(list(a))
    rb = _ranks(list(b))
    n = len(ra)
    ma = sum(ra) / n
    mb = sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = sum((x - ma) ** 2 for x in ra)
    vb = sum((y - mb) ** 2 for y in rb)
    if va == 0.0 or vb == 0.0:
        return None
    return cov / math.sqrt(va * vb)


def kruskal_wallis(groups: list[list[float]]) -> TestResult:
    """Kruskal-Wallis H test across two or more groups, tie-corrected."""
    if len(groups) < 2:
        raise TooFewGroups(f"need at least 2 groups, got {len(groups)}")
    for g in groups:
        if len(g) == 0:
            raise EmptyGroup("kruskal_wallis got an empty group")
    pooled: list[float] = []
    for g in groups:
        for v in g:
            if not math.isfinite(v):
                raise BadParams("kruskal_wallis got a non-finite value")
            pooled.append(float(v))
    n = len(pooled)
    ranks = _ranks(pooled)
    h = 0.0
    offset = 0
    for g in groups:
        r_sum = sum(ranks[offset : offset + len(g)])
        h += r_sum * r_sum / len(g)
        offset += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    # tie correction: 1 - sum(t^3 - t) / (n^3 - n) over tie groups
    counts: dict[float, int] = {}
    for v in pooled:
        counts[v] = counts.get(v, 0) + 1
    tie_sum = sum(c ** 3 - c for c in counts.values())
    denom = n ** 3 - n
    correction = 1.0 - tie_sum / denom if denom > 0 else 0.0
    df = float(len(groups) - 1)
    if correction == 0.0:
        # every pooled value identical: no evidence of any difference
        return TestResult(statistic=0.0, df=df, p_two_sided=1.0)
    h /= correction
    return TestResult(statistic=h, df=df, p_two_sided=chi2_sf(h, df))


def welch_t(a: list[float], b: list[float]) -> TestResult:
    """Welch's unequal-variance t test; p is two-sided."""
    if len(a) < 2 or len(b) < 2:
        raise TooShort("welch_t needs at least 2 values per side")
    for v in list(a) + list(b):
        if not math.isfinite(v):
            raise BadParams("welch_t got a non-finite value")
    na, nb = len(a), len(b)
    ma = sum(a) / na
    mb = sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    sa = va / na
    sb = vb / nb
    if sa + sb == 0.0:
        # both samples are constant; identical means carry no signal,
        # different constant means are a degenerate certainty
        if ma == mb:
            return TestResult(statistic=0.0, df=float(na + nb - 2), p_two_sided=1.0)
        t = math.inf if ma > mb else -math.inf
        return TestResult(statistic=t, df=float(na + nb - 2), p_two_sided=0.0)
    t = (ma - mb) / math.sqrt(sa + sb)
    df_num = (sa + sb) ** 2
    df_den = sa * sa / (na - 1) + sb * sb / (nb - 1)
    df = df_num / df_den
    p = 2.0 * t_sf(abs(t), df)
    return TestResult(statistic=t, df=df, p_two_sided=min(1.0, p))


def bonferroni(alpha: float, m: int) -> float:
    """Per-comparison threshold alpha / m for m comparisons."""
    if not (0.0 < alpha < 1.0):
        raise BadParams(f"alpha must be in (0, 1), got {alpha}")
    if not isinstance(m, int) or m < 1:
        raise BadParams(f"m must be a positive integer, got {m!r}")
    return alpha / m


def cap_outliers(
    times: list[float], k: float = 5.0, hard_limit: float = 600.0
) -> CapResult:
    """Clamp implausibly large timing values.

    Values above ``hard_limit`` are assumed to be interruptions and are
    left out of the mean/std estimate.  The cap is mean + k * std (sample
    std; zero when fewer than two values inform it), and every value above
    the cap is replaced by it.
    """
    if k <= 0 or not math.isfinite(k):
        raise BadParams(f"k must be finite and > 0, got {k}")
    if hard_limit <= 0 or not math.isfinite(hard_limit):
        raise BadParams(f"hard_limit must be finite and > 0, got {hard_limit}")
    if len(times) == 0:
        raise EmptyInput("cap_outliers got an empty series")
    for v in times:
        if not math.isfinite(v):
            raise BadParams("cap_outliers got a non-finite value")
    within = [float(v) for v in times if v <= hard_limit]
    if not within:
        raise AllAboveHardLimit(
            f"all {len(times)} values exceed the hard limit {hard_limit}"
        )
    mu = sum(within) / len(within)
    if len(within) > 1:
        var = sum((v - mu) ** 2 for v in within) / (len(within) - 1)
        sigma = math.sqrt(var)
    else:
        sigma = 0.0
    t_max = mu + k * sigma
    capped = [min(float(v), t_max) for v in times]
    n_capped = sum(1 for v in times if v > t_max)
    return CapResult(capped=capped, t_max=t_max, n_capped=n_capped)
