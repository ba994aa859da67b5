"""Sampling and log densities for the prior families the models use.

Scalar families: normal, normal truncated at zero (support [0, inf)), and
Cauchy. Correlation matrices carry an LKJ(eta) prior and are handled through
the lower-triangular factor L of the correlation matrix (R = L @ L.T), which
is what the non-centered model parameterization consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ParameterError(ValueError):
    """Invalid distribution parameter (non-positive scale, bad dimension)."""


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ParameterError(f"normal sd must be positive, got {self.sd}")


@dataclass(frozen=True)
class TruncatedNormalAtZero:
    """Normal(mean, sd) conditioned on the value being >= 0."""

    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ParameterError(f"truncated normal sd must be positive, got {self.sd}")


@dataclass(frozen=True)
class Cauchy:
    location: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"cauchy scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class LKJ:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"lkj eta must be positive, got {self.eta}")


PriorFamily = Normal | TruncatedNormalAtZero | Cauchy | LKJ


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


def _sample_truncated_at_zero(mean: float, sd: float, rng: np.random.Generator) -> float:
    accept = special.ndtr(mean / sd)  # P(X >= 0)
    if accept >= 0.5:
        while True:
            x = rng.normal(mean, sd)
            if x >= 0.0:
                return x
    # deep truncation: exponential-tilt rejection on the standardized tail
    # z >= a (exact for any a > 0, no CDF underflow)
    a = -mean / sd
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a - math.log(rng.random()) / lam
        if math.log(rng.random()) <= -0.5 * (z - lam) ** 2:
            return mean + sd * z


def sample_lkj_factor(dim: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw the lower-triangular factor L of R ~ LKJ(eta), R = L @ L.T.

    Onion construction: row i is filled from canonical partial correlations
    z_ij ~ 2 Beta(b_j, b_j) - 1 with b_j = eta + (dim - 2 - j) / 2, which makes
    the rows independent and R exactly LKJ(eta)-distributed.
    """
    if dim < 1:
        raise ParameterError("lkj dimension must be >= 1")
    if not eta > 0:
        raise ParameterError("lkj eta must be positive")
    L = np.zeros((dim, dim))
    L[0, 0] = 1.0
    for i in range(1, dim):
        rem = 1.0
        for j in range(i):
            b = eta + 0.5 * (dim - 2 - j)
            z = 2.0 * rng.beta(b, b) - 1.0
            L[i, j] = z * math.sqrt(rem)
            rem *= 1.0 - z * z
        L[i, i] = math.sqrt(rem)
    return L


def lkj_factor_log_density(L: np.ndarray, eta: float) -> float:
    """Normalized LKJ(eta) log density of a correlation factor.

    The density is over the free (strictly lower triangular) coordinates of L
    and is proportional to prod_i L_ii^(dim - i + 2 eta - 3) with 0-based row
    index i; the normalizer follows from the per-row ball integrals.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ParameterError("correlation factor must be square")
    dim = L.shape[0]
    if not eta > 0:
        raise ParameterError("lkj eta must be positive")
    row_norms = np.sqrt((L * L).sum(axis=1))
    if np.any(np.abs(row_norms - 1.0) > 1e-8) or np.any(np.diag(L) <= 0):
        return -math.inf
    if np.any(np.triu(L, 1) != 0.0):
        return -math.inf
    if dim == 1:
        return 0.0
    out = 0.0
    for i in range(1, dim):
        alpha = eta + 0.5 * (dim - 1 - i)
        out += (dim + 2.0 * eta - 3.0 - i) * math.log(L[i, i])
        # per-row normalizer: int_{|x|<1} (1-|x|^2)^(alpha-1) dx over the i-ball
        out -= 0.5 * i * math.log(math.pi) + special.gammaln(alpha) - special.gammaln(alpha + 0.5 * i)
    return out


def corr_from_factor(L: np.ndarray) -> np.ndarray:
    return np.asarray(L) @ np.asarray(L).T


def sample(family: PriorFamily, rng: np.random.Generator, *, dim: int | None = None):
    """Draw from a prior family; LKJ requires ``dim`` and returns the factor L."""
    if isinstance(family, Normal):
        return rng.normal(family.mean, family.sd)
    if isinstance(family, TruncatedNormalAtZero):
        return _sample_truncated_at_zero(family.mean, family.sd, rng)
    if isinstance(family, Cauchy):
        return family.location + family.scale * rng.standard_cauchy()
    if isinstance(family, LKJ):
        if dim is None:
            raise ParameterError("lkj sampling requires dim")
        return sample_lkj_factor(dim, family.eta, rng)
    raise ParameterError(f"unknown family {family!r}")


def log_density(family: PriorFamily, value) -> float:
    """Normalized log density; -inf outside the support."""
    if isinstance(family, Normal):
        return float(_normal_logpdf(value, family.mean, family.sd))
    if isinstance(family, TruncatedNormalAtZero):
        if value < 0.0:
            return -math.inf
        log_mass = float(special.log_ndtr(family.mean / family.sd))
        return float(_normal_logpdf(value, family.mean, family.sd)) - log_mass
    if isinstance(family, Cauchy):
        z = (value - family.location) / family.scale
        return -math.log(math.pi * family.scale * (1.0 + z * z))
    if isinstance(family, LKJ):
        return lkj_factor_log_density(value, family.eta)
    raise ParameterError(f"unknown family {family!r}")


def sample_mvnormal(mean: np.ndarray, chol_cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw mean + chol_cov @ z with z standard normal."""
    mean = np.asarray(mean, dtype=float)
    chol_cov = np.asarray(chol_cov, dtype=float)
    if chol_cov.shape != (mean.size, mean.size):
        raise ParameterError(
            f"cholesky factor shape {chol_cov.shape} does not match mean of size {mean.size}"
        )
    z = rng.standard_normal(mean.size)
    return mean + chol_cov @ z
