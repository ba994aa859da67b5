"""Log marginal likelihood from posterior draws via iterative bridge sampling.

The estimator iterates the optimal-bridge fixed point between the
unnormalized target evaluated at posterior draws and a moment-matched
multivariate normal proposal. Draws are split half/half: the first half fits
the proposal, the second half enters the bridge, together with an equal
number of fresh proposal draws.

Two variants are provided. ``plain`` bridges the target against the fitted
normal directly. ``warp3`` standardizes the posterior draws with the fitted
location and covariance factor and symmetrizes them with random signs, so the
warped target matches a standard normal proposal in its first three moments;
the warped density carries the exact Jacobian, leaving the estimand
unchanged.

When the first pass does not converge within ``maxiter``, the estimate is
rerun once from an importance-sampling starting value and the result carries
``warning=True`` regardless of the rerun outcome. The returned relative error
estimate is the usual asymptotic relative root-MSE with the posterior-side
term corrected for autocorrelation through the effective sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .diagnostics import ess
from .sampler import Draws


class BridgeEstimationError(RuntimeError):
    """Raised when too many evaluation points are unusable."""


@dataclass(frozen=True)
class BridgeConfig:
    maxiter: int = 1000
    tol: float = 1e-10
    method: str = "warp3"

    def __post_init__(self):
        if self.method not in ("plain", "warp3"):
            raise ValueError(f"unknown bridge method {self.method!r}")


@dataclass
class Proposal:
    mean: np.ndarray
    chol_cov: np.ndarray
    jitter_applied: bool = False

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        centered = points - self.mean
        sol = _solve_lower(self.chol_cov, centered.T).T
        quad = (sol * sol).sum(axis=1)
        logdet = np.log(np.diag(self.chol_cov)).sum()
        return -0.5 * quad - logdet - 0.5 * self.dim * math.log(2.0 * math.pi)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self.chol_cov.T


def _solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    return solve_triangular(L, b, lower=True)


@dataclass
class BridgeResult:
    logml: float
    n_iterations: int
    converged: bool
    warning: bool
    relative_error_estimate: float
    method: str
    n_iterations_first: int = 0
    n_excluded: int = 0
    jitter_applied: bool = False


def _split_matrix(draws) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First/second half split, chain by chain for MCMC draws."""
    if isinstance(draws, Draws):
        fit_parts, iter_parts, iter_chains = [], [], []
        for c in np.unique(draws.chain_id):
            block = draws.positions[draws.chain_id == c]
            half = block.shape[0] // 2
            fit_parts.append(block[:half])
            iter_parts.append(block[half:])
            iter_chains.append(np.full(block.shape[0] - half, c))
        return (
            np.concatenate(fit_parts),
            np.concatenate(iter_parts),
            np.concatenate(iter_chains),
        )
    matrix = np.atleast_2d(np.asarray(draws, dtype=float))
    half = matrix.shape[0] // 2
    return matrix[:half], matrix[half:], np.zeros(matrix.shape[0] - half, dtype=int)


def fit_proposal(draws) -> Proposal:
    """Moment-matched normal proposal from the first half of the draws.

    A rank-deficient covariance gets a small diagonal jitter (1e-8 times the
    mean diagonal) and the proposal is flagged.
    """
    fit, _, _ = _split_matrix(draws)
    if fit.shape[0] < 2 * fit.shape[1]:
        raise BridgeEstimationError(
            f"need at least {2 * fit.shape[1]} draws to fit a {fit.shape[1]}-dim proposal"
        )
    mean = fit.mean(axis=0)
    cov = np.atleast_2d(np.cov(fit, rowvar=False))
    jitter_applied = False
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        scale = float(np.diag(cov).mean())
        bump = 1e-8 * scale if scale > 0 else 1e-12
        cov = cov + bump * np.eye(cov.shape[0])
        chol = np.linalg.cholesky(cov)
        jitter_applied = True
    return Proposal(mean=mean, chol_cov=chol, jitter_applied=jitter_applied)


def warp3_transform(draws, proposal: Proposal, rng: np.random.Generator):
    """Warp the evaluation half of the draws and build the warped target.

    Returns (warped_draws, iter_chains, warped_log_target_factory) where the
    factory wraps an unnormalized log target f(theta) into the symmetrized
    standardized density g(eta) = -log 2 + log|L| +
    logaddexp(f(m + L eta), f(m - L eta)), whose normalizing constant equals
    that of f.
    """
    _, iter_half, iter_chains = _split_matrix(draws)
    eta = _solve_lower(proposal.chol_cov, (iter_half - proposal.mean).T).T
    signs = np.where(rng.random(eta.shape[0]) < 0.5, -1.0, 1.0)
    eta = eta * signs[:, None]
    logdet = float(np.log(np.diag(proposal.chol_cov)).sum())

    def make_warped(log_target_fn):
        def warped(points: np.ndarray) -> np.ndarray:
            points = np.atleast_2d(points)
            shift = points @ proposal.chol_cov.T
            fwd = log_target_fn(proposal.mean + shift)
            bwd = log_target_fn(proposal.mean - shift)
            return logdet - math.log(2.0) + np.logaddexp(fwd, bwd)

        return warped

    return eta, iter_chains, make_warped


def _std_normal_logpdf(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return -0.5 * (points * points).sum(axis=1) - 0.5 * points.shape[1] * math.log(
        2.0 * math.pi
    )


def _iterate(l1, l2, n1, n2, neff, r0, tol, maxiter, criterion):
    """Fixed-point iteration for the optimal bridge estimate.

    l1 = log target - log proposal at posterior draws, l2 likewise at proposal
    draws. Returns (logml, n_iter, converged, r_trace_last).
    """
    lstar = float(np.median(l1))
    s1 = neff / (neff + n2)
    s2 = n2 / (neff + n2)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        exp_l2 = np.exp(l2 - lstar)
        exp_l1 = np.exp(l1 - lstar)
        r = r0
        logml = math.log(r) + lstar if r > 0 else -math.inf
        criterion_val = tol + 1.0
        i = 0
        while i < maxiter and criterion_val > tol:
            r_old = r
            logml_old = logml
            numerator = exp_l2 / (s1 * exp_l2 + s2 * r)
            denominator = 1.0 / (s1 * exp_l1 + s2 * r)
            if not (np.all(np.isfinite(numerator)) and np.all(np.isfinite(denominator))):
                return math.nan, i, False, r
            r = (n1 / n2) * numerator.sum() / denominator.sum()
            logml = math.log(r) + lstar if r > 0 else -math.inf
            i += 1
            if criterion == "r":
                criterion_val = abs((r - r_old) / r) if r != 0 else math.inf
            else:
                criterion_val = abs((logml - logml_old) / logml) if logml != 0 else math.inf
    converged = criterion_val <= tol and math.isfinite(logml)
    return logml, i, converged, r


def _relative_error(l1, l2, iter_chains, logml) -> float:
    """Asymptotic relative root-MSE of the bridge estimate.

    Proposal-side variance over fresh independent draws plus posterior-side
    variance corrected by the effective sample size of the integrand series.
    """
    n1, n2 = l1.size, l2.size
    s1 = n1 / (n1 + n2)
    s2 = n2 / (n1 + n2)
    # f1 at proposal draws: normalized target over the bridge denominator
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        a = l2 - logml
        f1 = np.exp(a) / (s1 * np.exp(a) + s2)
        b = l1 - logml
        f2 = 1.0 / (s1 * np.exp(b) + s2)
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2))):
        return math.inf
    mean_f1 = f1.mean()
    mean_f2 = f2.mean()
    if mean_f1 <= 0 or mean_f2 <= 0:
        return math.inf
    term1 = f1.var(ddof=1) / (n2 * mean_f1**2)
    try:
        ess_f2 = ess(f2, iter_chains)
    except ValueError:
        ess_f2 = float(n1)
    if not (ess_f2 > 0 and math.isfinite(ess_f2)):
        ess_f2 = float(n1)
    term2 = f2.var(ddof=1) / (ess_f2 * mean_f2**2)
    return float(math.sqrt(term1 + term2))


def bridge_logml(
    log_target_fn,
    draws,
    proposal: Proposal,
    maxiter: int = 1000,
    tol: float = 1e-10,
    rng: np.random.Generator | None = None,
    method: str = "plain",
) -> BridgeResult:
    """Estimate the log normalizing constant of an unnormalized log target.

    ``log_target_fn`` maps an (n, dim) array to n log density values;
    ``draws`` are posterior draws (Draws or a plain matrix); ``proposal``
    comes from :func:`fit_proposal`. Proposal points where the target is not
    finite are excluded and counted; more than 10% exclusions aborts.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if method not in ("plain", "warp3"):
        raise ValueError(f"unknown bridge method {method!r}")

    if method == "warp3":
        eta, iter_chains, make_warped = warp3_transform(draws, proposal, rng)
        target = make_warped(log_target_fn)
        post_points = eta
        gen = rng.standard_normal(eta.shape)
        q11 = target(post_points)
        q12 = _std_normal_logpdf(post_points)
        q21 = target(gen)
        q22 = _std_normal_logpdf(gen)
    else:
        _, iter_half, iter_chains = _split_matrix(draws)
        post_points = iter_half
        gen = proposal.draw(iter_half.shape[0], rng)
        q11 = np.asarray(log_target_fn(post_points), dtype=float)
        q12 = proposal.logpdf(post_points)
        q21 = np.asarray(log_target_fn(gen), dtype=float)
        q22 = proposal.logpdf(gen)

    n_total = q11.size + q21.size
    keep1 = np.isfinite(q11) & np.isfinite(q12)
    keep2 = np.isfinite(q21) & np.isfinite(q22)
    n_excluded = int((~keep1).sum() + (~keep2).sum())
    if n_excluded > 0.10 * n_total:
        raise BridgeEstimationError(
            f"{n_excluded} of {n_total} evaluation points unusable"
        )
    l1 = (q11 - q12)[keep1]
    l2 = (q21 - q22)[keep2]
    iter_chains = iter_chains[keep1]
    n1, n2 = l1.size, l2.size

    try:
        neff = float(
            np.median(
                [ess(post_points[keep1][:, k], iter_chains) for k in range(post_points.shape[1])]
            )
        )
    except ValueError:
        neff = float(n1)
    if not (neff > 0 and math.isfinite(neff)):
        neff = float(n1)

    logml, n_first, converged, r_last = _iterate(
        l1, l2, n1, n2, neff, r0=0.5, tol=tol, maxiter=maxiter, criterion="r"
    )
    warning = not converged
    n_iter_total = n_first
    if not converged:
        # restart from a plain importance-sampling estimate under the proposal
        lstar = float(np.median(l1))
        r0_retry = math.exp(logsumexp(l2) - math.log(n2) - lstar)
        if not (math.isfinite(r0_retry) and r0_retry > 0):
            r0_retry = 0.5
        logml, n_second, converged, r_last = _iterate(
            l1, l2, n1, n2, neff, r0=r0_retry, tol=1e-4, maxiter=maxiter, criterion="logml"
        )
        n_iter_total += n_second

    rel_err = (
        _relative_error(l1, l2, iter_chains, logml) if math.isfinite(logml) else math.inf
    )
    return BridgeResult(
        logml=float(logml),
        n_iterations=n_iter_total,
        converged=bool(converged),
        warning=bool(warning),
        relative_error_estimate=rel_err,
        method=method,
        n_iterations_first=n_first,
        n_excluded=n_excluded,
        jitter_applied=proposal.jitter_applied,
    )


def bayes_factor(logml_1: float, logml_2: float):
    """BF12 and its log from two log marginal likelihoods."""
    if not (math.isfinite(logml_1) and math.isfinite(logml_2)):
        raise ValueError("bayes_factor requires finite log marginal likelihoods")
    log_bf = logml_1 - logml_2
    return math.exp(log_bf), log_bf


def posterior_model_prob(log_bf10: float, prior_h1: float) -> float:
    """Posterior probability of the alternative from log BF10 and its prior.

    Computed in log space as logistic(log_bf10 + logit(prior)); degenerate
    priors 0 and 1 are returned unchanged with a warning.
    """
    if not 0.0 <= prior_h1 <= 1.0:
        raise ValueError(f"prior_h1 must be in [0, 1], got {prior_h1}")
    if prior_h1 in (0.0, 1.0):
        import warnings

        warnings.warn("degenerate model prior: posterior equals the prior", stacklevel=2)
        return prior_h1
    if log_bf10 == 0.0:
        return prior_h1
    x = log_bf10 + math.log(prior_h1) - math.log1p(-prior_h1)
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    return math.exp(x) / (1.0 + math.exp(x))
