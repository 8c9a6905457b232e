"""Evaluation arithmetic: time savings, overhead, BD-rate and a statistically
robust encoding-time measurement loop."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import interpolate, optimize, special


def ets(t_anchor: float, t_test: float) -> float:
    """Encoding time saving as a fraction (negative for a slowdown)."""
    if t_anchor <= 0:
        raise ValueError("anchor time must be positive")
    return (t_anchor - t_test) / t_anchor


def eta(ets_value: float) -> float:
    if ets_value >= 1:
        raise ValueError("ETS must be below 1")
    return 1.0 / (1.0 - ets_value)


class TimeBreakdown(NamedTuple):
    t_enc: float
    t_net: float
    t_post: float


def overhead_rho(b: TimeBreakdown | Sequence[float]) -> float:
    t_enc, t_net, t_post = b
    if min(t_enc, t_net, t_post) < 0:
        raise ValueError("times must be non-negative")
    total = t_enc + t_net + t_post
    if total <= 0:
        raise ValueError("total time must be positive")
    return (t_net + t_post) / total


def mean_overhead_rho(breakdowns: Sequence[Sequence[float]]) -> tuple[float, float]:
    """(mean of per-row rho, rho of the averaged times).

    Published averages are usually the first; the two differ noticeably when
    rows have very different encoder times.
    """
    rhos = [overhead_rho(b) for b in breakdowns]
    mean_times = np.mean(np.asarray(breakdowns, dtype=float), axis=0)
    return float(np.mean(rhos)), overhead_rho(tuple(mean_times))


# ---------------------------------------------------------------------------
# BD-rate


class RdPoint(NamedTuple):
    bitrate: float
    psnr: float


def _rd_arrays(points: Sequence) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted(((float(r), float(q)) for r, q in points), key=lambda p: p[1])
    rate = np.array([p[0] for p in pts])
    psnr = np.array([p[1] for p in pts])
    if len(rate) < 4:
        raise ValueError("BD-rate needs at least 4 RD points per curve")
    if np.any(rate <= 0):
        raise ValueError("bitrates must be positive")
    if np.any(np.diff(psnr) <= 0):
        raise ValueError("PSNR values must be distinct")
    return rate, psnr


def rd_interpolant(psnr: np.ndarray, log_rate: np.ndarray):
    """log10(rate) as a piecewise cubic in PSNR.

    Four points use a natural cubic spline, more points a monotone (PCHIP)
    interpolant.
    """
    if len(psnr) == 4:
        return interpolate.CubicSpline(psnr, log_rate, bc_type="natural")
    return interpolate.PchipInterpolator(psnr, log_rate)


def bd_rate(anchor: Sequence, test: Sequence) -> float:
    """Bjontegaard delta bitrate of ``test`` against ``anchor`` in percent.

    Each curve is a sequence of ``(bitrate, psnr)`` pairs.
    """
    r_a, q_a = _rd_arrays(anchor)
    r_t, q_t = _rd_arrays(test)
    lo = max(q_a.min(), q_t.min())
    hi = min(q_a.max(), q_t.max())
    if hi <= lo:
        raise ValueError("RD curves do not overlap in PSNR")
    f_a = rd_interpolant(q_a, np.log10(r_a))
    f_t = rd_interpolant(q_t, np.log10(r_t))
    avg_diff = (f_t.integrate(lo, hi) - f_a.integrate(lo, hi)) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)


def delta_metrics(ets_by_qp_total: Mapping[int, float], ets_by_qp_basic: Mapping[int, float],
                  bdbr_total: float, bdbr_basic: float) -> tuple[float, float]:
    """Percentage deviations of ETS and BDBR between a dense and a basic QP set.

    The ETS sum over the dense set is normalised by the set-size ratio (20/4
    for the usual configuration).
    """
    ratio = len(ets_by_qp_total) / len(ets_by_qp_basic) if ets_by_qp_basic else 0
    basic = sum(ets_by_qp_basic.values())
    if ratio == 0 or basic == 0 or bdbr_basic == 0:
        raise ValueError("zero denominator in delta metrics")
    delta_ets = (sum(ets_by_qp_total.values()) / (ratio * basic) - 1.0) * 100.0
    delta_bdbr = (bdbr_total / bdbr_basic - 1.0) * 100.0
    return delta_ets, delta_bdbr


# ---------------------------------------------------------------------------
# Student t and the timing protocol


def t_cdf(x: float, df: float) -> float:
    tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - tail if x > 0 else tail


def t_quantile(p: float, df: float) -> float:
    """One-sided quantile of Student's t with ``df`` degrees of freedom."""
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    if df <= 0:
        raise ValueError("df must be positive")
    if p == 0.5:
        return 0.0
    hi = 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
    lo = -1.0
    while t_cdf(lo, df) > p:
        lo *= 2.0
    return optimize.brentq(lambda x: t_cdf(x, df) - p, lo, hi, xtol=1e-12, rtol=1e-14)


def tukey_filter(values: Sequence[float], k: float = 1.5) -> list[float]:
    """Drop values outside the Tukey fences (exclusive-method quartiles)."""
    if len(values) < 4:
        return list(values)
    q1, _, q3 = statistics.quantiles(values, n=4, method="exclusive")
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    return [v for v in values if lo <= v <= hi]


@dataclass
class TimingSeries:
    measurements: list[float] = field(default_factory=list)
    alpha: float = 0.99
    beta: float = 0.01
    min_m: int = 4
    max_m: int = 64
    outlier_after: int = 8

    def __post_init__(self):
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ValueError("alpha and beta must be in (0, 1)")
        if self.min_m < 2 or self.max_m < self.min_m:
            raise ValueError("need 2 <= min_m <= max_m")
        if any(v <= 0 for v in self.measurements):
            raise ValueError("measurements must be positive")


class TimingResult(NamedTuple):
    mean: float
    m: int
    converged: bool
    retained: tuple[float, ...]


def precision_reached(values: Sequence[float], alpha: float, beta: float) -> bool:
    m = len(values)
    if m < 2:
        return False
    mean = statistics.fmean(values)
    sigma = statistics.stdev(values)
    return 2.0 * sigma / math.sqrt(m) * t_quantile(alpha, m - 1) < beta * mean


def robust_mean_time(series: TimingSeries, next_measurement: Callable[[], float]) -> TimingResult:
    """Measure until the mean is known to within ``beta`` with confidence ``alpha``.

    Once more than ``outlier_after`` measurements exist, Tukey fences are
    applied before the test.  ``m`` counts all measurements taken.  Hitting
    ``max_m`` returns the current estimate with ``converged=False``.
    """
    values = list(series.measurements)
    while True:
        if len(values) >= series.min_m:
            kept = tukey_filter(values) if len(values) > series.outlier_after else list(values)
            if precision_reached(kept, series.alpha, series.beta):
                return TimingResult(statistics.fmean(kept), len(values), True, tuple(kept))
            if len(values) >= series.max_m:
                return TimingResult(statistics.fmean(kept), len(values), False, tuple(kept))
        value = float(next_measurement())
        if value <= 0:
            raise ValueError("measurements must be positive")
        values.append(value)
