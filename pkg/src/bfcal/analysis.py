"""Evaluation statistics for calibration output.

* One-sample Bayes factor t-test with a Cauchy prior on the standardized
  effect size, applied to the paired deviations (posterior probability minus
  the 0/1 indicator of the sampled model), with a scale sensitivity sweep.
* Reliability diagrams through isotonic (pool-adjacent-violators) regression
  of the outcomes on the forecast order, with resampled consistency bands
  under the calibration hypothesis.
* Evidence as a function of the number of simulations (running Bayes factor
  over record prefixes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

DEFAULT_SCALE = math.sqrt(2.0) / 2.0

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(64)
# log(w_k e^{x_k^2}): Gauss-Hermite reweighted for integrals without the
# e^{-x^2} factor
_GH_LOG_CORE = np.log(_GH_WEIGHTS) + _GH_NODES**2


class DegenerateDataError(ValueError):
    """All differences identical: the t statistic is undefined."""


# ---------------------------------------------------------------------------
# noncentral t density through its normal scale-mixture representation
# ---------------------------------------------------------------------------

def _chi_scaled_moments(df: float) -> tuple[float, float]:
    """Mean and sd of W = sqrt(chi2_df / df)."""
    log_mean = 0.5 * math.log(2.0 / df) + special.gammaln(0.5 * (df + 1)) - special.gammaln(0.5 * df)
    mean = math.exp(log_mean)
    return mean, math.sqrt(max(1.0 - mean * mean, 1e-12))


def _chi_scaled_logpdf(w: np.ndarray, df: float) -> np.ndarray:
    return (
        math.log(2.0)
        + 0.5 * df * math.log(0.5 * df)
        - special.gammaln(0.5 * df)
        + (df - 1.0) * np.log(w)
        - 0.5 * df * w * w
    )


def nct_logpdf(t: float, df: float, ncp: float) -> float:
    """Log density of the noncentral t distribution.

    Written as the scale mixture int w phi(t w - ncp) f_W(w) dw with
    W = sqrt(chi2_df/df), integrated by 64-node Gauss-Hermite quadrature with
    nodes placed by the moment-matched normal approximation of W. Nodes
    falling outside the support contribute nothing.
    """
    mean, sd = _chi_scaled_moments(df)
    w = mean + math.sqrt(2.0) * sd * _GH_NODES
    ok = w > 0
    w = w[ok]
    resid = t * w - ncp
    log_h = (
        np.log(w)
        - 0.5 * resid * resid
        - 0.5 * math.log(2.0 * math.pi)
        + _chi_scaled_logpdf(w, df)
    )
    log_terms = _GH_LOG_CORE[ok] + log_h + math.log(math.sqrt(2.0) * sd)
    return float(special.logsumexp(log_terms))


def t_logpdf(t: float, df: float) -> float:
    return float(
        special.gammaln(0.5 * (df + 1))
        - special.gammaln(0.5 * df)
        - 0.5 * math.log(df * math.pi)
        - 0.5 * (df + 1) * math.log1p(t * t / df)
    )


def _log_marginal_h1(t: float, df: float, n: int, scale: float) -> float:
    """log of int nct(t; df, delta sqrt(n)) Cauchy(delta; 0, scale) d delta.

    Substituting delta = scale tan(phi) absorbs the Cauchy density into a
    flat measure on (-pi/2, pi/2); the integral runs in log space around the
    grid maximum of the integrand.
    """
    root_n = math.sqrt(n)

    def log_integrand(phi: float) -> float:
        return nct_logpdf(t, df, root_n * scale * math.tan(phi))

    grid = np.linspace(-0.5 * math.pi + 1e-9, 0.5 * math.pi - 1e-9, 101)
    log_vals = np.array([log_integrand(p) for p in grid])
    best = int(log_vals.argmax())
    # polish the maximum by ternary search so the exp shift cannot overflow
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    for _ in range(60):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if log_integrand(m1) < log_integrand(m2):
            lo = m1
        else:
            hi = m2
    peak = 0.5 * (lo + hi)
    shift = max(float(log_vals.max()), log_integrand(peak))
    if not math.isfinite(shift):
        raise FloatingPointError("marginal integrand vanished everywhere")

    def integrand(phi: float) -> float:
        v = log_integrand(phi) - shift
        if v > 700.0:  # cannot happen once shift is the true max
            v = 700.0
        return math.exp(v) if v > -745.0 else 0.0

    value, _ = integrate.quad(
        integrand,
        -0.5 * math.pi,
        0.5 * math.pi,
        points=[peak],
        limit=200,
        epsabs=1e-12,
        epsrel=1e-10,
    )
    return math.log(value) + shift - math.log(math.pi)


def _t_statistic(differences: np.ndarray) -> tuple[float, int]:
    d = np.asarray(differences, dtype=float)
    if d.size < 2:
        raise ValueError("need at least 2 differences")
    sd = d.std(ddof=1)
    # identical values can leave a rounding residue in the variance
    if sd <= 1e-12 * max(1.0, float(np.abs(d).max())):
        raise DegenerateDataError("differences have zero variance")
    return float(d.mean() / (sd / math.sqrt(d.size))), d.size


def jzs_paired_log_bf(differences: np.ndarray, scale: float = DEFAULT_SCALE) -> float:
    """log BF10 of the one-sample Cauchy-prior t-test on the differences."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    t, n = _t_statistic(differences)
    df = n - 1
    return _log_marginal_h1(t, df, n, scale) - t_logpdf(t, df)


def jzs_paired_bf(differences: np.ndarray, scale: float = DEFAULT_SCALE) -> float:
    """BF10 for the hypothesis that the mean difference is nonzero."""
    return math.exp(jzs_paired_log_bf(differences, scale))


def default_scale_grid(n_points: int = 20, low: float = 0.05, high: float = 1.5) -> np.ndarray:
    """Log-spaced sensitivity grid with the default scale snapped in."""
    grid = np.geomspace(low, high, n_points)
    grid[int(np.abs(grid - DEFAULT_SCALE).argmin())] = DEFAULT_SCALE
    return grid


def sensitivity_curve(differences: np.ndarray, scales=None) -> list[tuple[float, float]]:
    """(scale, BF10) pairs across prior scales, preserving input order."""
    if scales is None:
        scales = default_scale_grid()
    return [(float(s), jzs_paired_bf(differences, float(s))) for s in scales]


# ---------------------------------------------------------------------------
# reliability diagrams
# ---------------------------------------------------------------------------

@dataclass
class ReliabilityCurve:
    forecasts: np.ndarray          # unique sorted forecast values
    fitted: np.ndarray             # isotonic conditional event probabilities
    weights: np.ndarray            # number of cases pooled at each forecast
    n: int
    event_rate: float
    band_lower: np.ndarray | None = None
    band_upper: np.ndarray | None = None
    hist_counts: np.ndarray = field(default_factory=lambda: np.zeros(10))
    hist_edges: np.ndarray = field(default_factory=lambda: np.linspace(0, 1, 11))


def _pav(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted least-squares isotonic fit (non-decreasing), block merging."""
    n = values.size
    means = np.empty(n)
    wsum = np.empty(n)
    size = np.empty(n, dtype=int)
    m = 0
    for i in range(n):
        means[m] = values[i]
        wsum[m] = weights[i]
        size[m] = 1
        m += 1
        while m > 1 and means[m - 2] > means[m - 1]:
            total = wsum[m - 2] + wsum[m - 1]
            means[m - 2] = (means[m - 2] * wsum[m - 2] + means[m - 1] * wsum[m - 1]) / total
            wsum[m - 2] = total
            size[m - 2] += size[m - 1]
            m -= 1
    return np.repeat(means[:m], size[:m])


def pav_reliability(forecasts: np.ndarray, outcomes: np.ndarray) -> ReliabilityCurve:
    """Isotonic regression of binary outcomes on forecast order.

    Tied forecasts are pooled before fitting, so the curve has one point per
    distinct forecast value.
    """
    forecasts = np.asarray(forecasts, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if forecasts.size == 0:
        raise ValueError("empty input")
    if forecasts.shape != outcomes.shape:
        raise ValueError("forecasts and outcomes must have equal length")
    if np.any((forecasts < 0) | (forecasts > 1)):
        raise ValueError("forecasts must lie in [0, 1]")
    uniq, inverse, counts = np.unique(forecasts, return_inverse=True, return_counts=True)
    pooled = np.bincount(inverse, weights=outcomes) / counts
    fitted = _pav(pooled, counts.astype(float))
    hist_counts, hist_edges = np.histogram(forecasts, bins=10, range=(0.0, 1.0))
    return ReliabilityCurve(
        forecasts=uniq,
        fitted=fitted,
        weights=counts.astype(float),
        n=forecasts.size,
        event_rate=float(outcomes.mean()),
        hist_counts=hist_counts,
        hist_edges=hist_edges,
    )


def consistency_bands(
    forecasts: np.ndarray,
    level: float = 0.95,
    n_resample: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise band of the isotonic fit under exact calibration.

    Outcomes are resampled as Bernoulli(forecast), refit with the same
    estimator, and the (1 +/- level)/2 quantiles taken per evaluation point
    (the distinct forecast values).
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(0)
    forecasts = np.asarray(forecasts, dtype=float)
    uniq, inverse, counts = np.unique(forecasts, return_inverse=True, return_counts=True)
    fits = np.empty((n_resample, uniq.size))
    for rep in range(n_resample):
        z = (rng.random(forecasts.size) < forecasts).astype(float)
        pooled = np.bincount(inverse, weights=z) / counts
        fits[rep] = _pav(pooled, counts.astype(float))
    alpha = 0.5 * (1.0 - level)
    lower = np.quantile(fits, alpha, axis=0)
    upper = np.quantile(fits, 1.0 - alpha, axis=0)
    return lower, upper


def evidence_vs_n(records, scale: float = DEFAULT_SCALE, stride: int = 1):
    """Running null-vs-bias evidence over record prefixes.

    Returns (n, BF01) pairs for prefix lengths stride, 2*stride, ..., always
    including the full length; prefixes with zero-variance differences are
    marked with None.
    """
    from .sbc import deviations

    if stride < 1:
        raise ValueError("stride must be >= 1")
    d = deviations(sorted(records, key=lambda r: r.sim_id))
    if d.size < 2:
        raise ValueError("need at least 2 usable records")
    lengths = list(range(stride, d.size + 1, stride))
    if lengths[-1] != d.size:
        lengths.append(d.size)
    out = []
    for n in lengths:
        if n < 2:
            continue
        try:
            out.append((n, math.exp(-jzs_paired_log_bf(d[:n], scale))))
        except DegenerateDataError:
            out.append((n, None))
    return out
