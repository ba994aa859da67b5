"""Analytic-oracle checks runnable from the CLI.

Each check compares one estimator against an independent closed form or
brute-force computation and prints a pass/fail line; any failure makes the
command exit nonzero. The full suite is sized to finish well under ten
minutes on a laptop.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import integrate, stats

from . import distributions as dist
from .analysis import jzs_paired_log_bf, pav_reliability
from .analytic import ConjugateNormalModel
from .bridge import bridge_logml, fit_proposal
from .rng import substream
from .sbc import analytic_sbc_records, deviations, marginal_check

_SEED = 20250801


def check_conjugate_bridge(fast: bool, logml_offset: float = 0.0):
    """Bridge estimate vs closed-form evidence, plain and warped variants."""
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=2)
    reps = 20 if fast else 50
    n_draws = 20000
    worst = 0.0
    for rep in range(reps):
        rng = substream(_SEED, "bridge-check", rep)
        y = model.simulate("H1", rng)
        exact = model.logml_h1(y) + logml_offset
        draws = model.posterior_draws(y, n_draws, rng)
        proposal = fit_proposal(draws)
        for method in ("plain", "warp3"):
            res = bridge_logml(
                model.log_joint_h1(y), draws, proposal, rng=rng, method=method
            )
            worst = max(worst, abs(res.logml - exact))
    return worst < 0.01, f"max |logml error| = {worst:.2e} over {reps} reps x 2 methods"


def check_half_normal(fast: bool):
    n = 50_000 if fast else 100_000
    rng = substream(_SEED, "half-normal")
    fam = dist.TruncatedNormalAtZero(0.0, 1.0)
    draws = np.array([dist.sample(fam, rng) for _ in range(n)])
    target = math.sqrt(2.0 / math.pi)
    se = math.sqrt(1.0 - target**2) / math.sqrt(n)
    err = abs(draws.mean() - target)
    return err < 4 * se, f"|mean - sigma sqrt(2/pi)| = {err:.2e} (4 SE = {4*se:.2e})"


def check_lkj(fast: bool):
    n = 50_000 if fast else 100_000
    rng = substream(_SEED, "lkj")
    r = np.empty(n)
    for i in range(n):
        L = dist.sample_lkj_factor(2, 2.0, rng)
        r[i] = (L @ L.T)[0, 1]
    edges = np.linspace(-1, 1, 41)
    norm = integrate.quad(lambda x: 1 - x * x, -1, 1)[0]
    probs = np.array(
        [
            integrate.quad(lambda x: (1 - x * x) / norm, lo, hi)[0]
            for lo, hi in zip(edges[:-1], edges[1:])
        ]
    )
    counts, _ = np.histogram(r, bins=edges)
    expected = probs * n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    pval = float(stats.chi2.sf(chi2, len(counts) - 1))
    return pval > 0.01, f"GOF vs (1-r^2): chi2 = {chi2:.1f}, p = {pval:.3f}"


def check_pav(fast: bool):
    n_instances = 100 if fast else 200
    rng = substream(_SEED, "pav")
    for _ in range(n_instances):
        n = int(rng.integers(1, 9))
        forecasts = np.round(rng.random(n), 3)
        outcomes = (rng.random(n) < forecasts).astype(float)
        curve = pav_reliability(forecasts, outcomes)
        fitted_full = np.repeat(curve.fitted, curve.weights.astype(int))
        best = _brute_isotonic(forecasts, outcomes)
        if not np.allclose(np.sort(fitted_full), np.sort(best), atol=1e-10):
            return False, "mismatch with exhaustive isotonic fit"
        mean_err = abs(
            float((curve.fitted * curve.weights).sum() / curve.weights.sum())
            - outcomes.mean()
        )
        if mean_err > 1e-12:
            return False, f"mean preservation violated by {mean_err:.2e}"
    return True, f"{n_instances} random instances match the exhaustive fit"


def _brute_isotonic(forecasts, outcomes):
    order = np.argsort(forecasts, kind="stable")
    y = outcomes[order]
    # pool ties first, then search all contiguous block partitions
    uniq, inverse, counts = np.unique(forecasts[order], return_inverse=True, return_counts=True)
    pooled = np.bincount(inverse, weights=y) / counts
    m = pooled.size
    best, best_sse = None, math.inf
    for mask in range(1 << max(m - 1, 0)):
        fitted = np.empty(m)
        start = 0
        ok = True
        prev = -math.inf
        for i in range(m):
            if i == m - 1 or (mask >> i) & 1:
                block = slice(start, i + 1)
                val = float(
                    (pooled[block] * counts[block]).sum() / counts[block].sum()
                )
                if val < prev - 1e-12:
                    ok = False
                    break
                fitted[block] = val
                prev = val
                start = i + 1
        if not ok:
            continue
        sse = float((counts * (pooled - fitted) ** 2).sum())
        if sse < best_sse - 1e-15:
            best_sse = sse
            best = fitted.copy()
    return np.repeat(best, counts.astype(int))


def check_jzs(fast: bool):
    """Quadrature estimator vs brute-force double quadrature."""
    grid = [(0.0, 20, 0.7071067811865476), (2.0, 100, 0.2), (4.0, 20, 1.0)]
    if not fast:
        grid += [(1.0, 1000, 0.7071067811865476), (2.0, 20, 0.2)]
    worst = 0.0
    for t, n, scale in grid:
        mine = math.exp(jzs_paired_log_bf_from_stats(t, n, scale))
        ref = _brute_jzs(t, n, scale)
        worst = max(worst, abs(mine - ref) / ref)
    return worst < 1e-4, f"max relative error vs double quadrature = {worst:.2e}"


def jzs_paired_log_bf_from_stats(t: float, n: int, scale: float) -> float:
    from .analysis import _log_marginal_h1, t_logpdf

    return _log_marginal_h1(t, n - 1, n, scale) - t_logpdf(t, n - 1)


def _brute_jzs(t: float, n: int, scale: float) -> float:
    from .analysis import _chi_scaled_logpdf

    df = n - 1
    root_n = math.sqrt(n)

    def integrand(w, phi):
        delta = scale * math.tan(phi)
        resid = t * w - delta * root_n
        return (
            w
            * math.exp(-0.5 * resid * resid)
            / math.sqrt(2 * math.pi)
            * math.exp(_chi_scaled_logpdf(np.array([w]), df)[0])
            / math.pi
        )

    num, _ = integrate.dblquad(
        integrand, -0.5 * math.pi, 0.5 * math.pi, 0.0, np.inf,
        epsabs=1e-12, epsrel=1e-9,
    )
    return num / stats.t.pdf(t, df)


def check_marginal_identity(fast: bool):
    n_sims = 400 if fast else 1000
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
    records = analytic_sbc_records(model, prior_h1=0.2, n_sims=n_sims, base_seed=_SEED)
    summary = marginal_check(records, 0.2)
    ok = abs(summary.mean_deviation) < 3 * summary.se
    d = deviations(records)
    bf01 = math.exp(-jzs_paired_log_bf(d))
    return ok and bf01 > 1, (
        f"mean deviation = {summary.mean_deviation:+.4f} (3 SE = {3*summary.se:.4f}), "
        f"BF01 = {bf01:.1f}"
    )


CHECKS = [
    ("conjugate evidence (bridge, plain+warp3)", check_conjugate_bridge),
    ("half-normal sampler moment", check_half_normal),
    ("LKJ(2) goodness of fit", check_lkj),
    ("isotonic fit vs exhaustive search", check_pav),
    ("t-test Bayes factor vs double quadrature", check_jzs),
    ("marginal calibration identity", check_marginal_identity),
]


def run_validation(fast: bool = False) -> int:
    failures = 0
    print(f"{'check':45s} {'status':8s} detail")
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(fast)
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"exception: {exc!r}"
        status = "pass" if ok else "FAIL"
        failures += not ok
        print(f"{name:45s} {status:8s} {detail} [{time.perf_counter() - t0:.1f}s]")
    return 1 if failures else 0
