"""Conjugate normal location model with closed-form evidence.

Observations are y_i ~ Normal(mu, sigma^2 I_d) with known sigma. The point
null pins mu = 0; the alternative puts mu ~ Normal(0, tau^2 I_d). Both
marginal likelihoods and the posterior over mu are available in closed form,
which makes this the reference target for validating the bridge estimator
and the end-to-end calibration identity without any MCMC error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ConjugateNormalModel:
    sigma: float = 1.0
    tau: float = 1.0
    n_obs: int = 10
    dim: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau > 0):
            raise ValueError("sigma and tau must be positive")
        if self.n_obs < 1 or self.dim < 1:
            raise ValueError("n_obs and dim must be >= 1")

    # ---- simulation -------------------------------------------------------

    def simulate(self, hypothesis: str, rng: np.random.Generator) -> np.ndarray:
        mu = np.zeros(self.dim)
        if hypothesis == "H1":
            mu = self.tau * rng.standard_normal(self.dim)
        return mu + self.sigma * rng.standard_normal((self.n_obs, self.dim))

    # ---- closed forms -----------------------------------------------------

    def logml_h0(self, y: np.ndarray) -> float:
        y = np.atleast_2d(y)
        return float(
            -0.5 * (y * y).sum() / self.sigma**2
            - y.size * (math.log(self.sigma) + 0.5 * _LOG_2PI)
        )

    def logml_h1(self, y: np.ndarray) -> float:
        # per dimension the marginal is N(0, sigma^2 I_m + tau^2 J_m); the
        # rank-one structure gives the determinant and quadratic form directly
        y = np.atleast_2d(y)
        m = y.shape[0]
        s2, t2 = self.sigma**2, self.tau**2
        total = y.sum(axis=0)
        logdet = (m - 1) * math.log(s2) + math.log(s2 + m * t2)
        quad = (y * y).sum() / s2 - t2 * (total * total).sum() / (s2 * (s2 + m * t2))
        return float(-0.5 * (y.size * _LOG_2PI + self.dim * logdet + quad))

    def log_bf10(self, y: np.ndarray) -> float:
        return self.logml_h1(y) - self.logml_h0(y)

    def posterior(self, y: np.ndarray) -> tuple[np.ndarray, float]:
        """Posterior mean vector and (scalar, isotropic) posterior sd of mu."""
        y = np.atleast_2d(y)
        m = y.shape[0]
        s2, t2 = self.sigma**2, self.tau**2
        mean = t2 * y.sum(axis=0) / (s2 + m * t2)
        sd = math.sqrt(t2 * s2 / (s2 + m * t2))
        return mean, sd

    def posterior_draws(self, y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        mean, sd = self.posterior(y)
        return mean + sd * rng.standard_normal((n, self.dim))

    def log_joint_h1(self, y: np.ndarray):
        """Unnormalized log target over mu whose normalizer is logml_h1."""
        y = np.atleast_2d(y)
        m = y.shape[0]
        s2, t2 = self.sigma**2, self.tau**2
        sum_y = y.sum(axis=0)
        sq = (y * y).sum()
        const = -0.5 * y.size * _LOG_2PI - 0.5 * y.size * math.log(s2) - 0.5 * sq / s2
        prior_const = -0.5 * self.dim * (_LOG_2PI + math.log(t2))

        def log_joint(points: np.ndarray) -> np.ndarray:
            points = np.atleast_2d(points)
            lik = (points @ sum_y) / s2 - 0.5 * m * (points * points).sum(axis=1) / s2
            prior = -0.5 * (points * points).sum(axis=1) / t2
            return const + prior_const + lik + prior

        return log_joint
