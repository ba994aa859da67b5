"""Convergence diagnostics: split potential scale reduction and effective
sample size, computed on half-chains the way Stan does."""

from __future__ import annotations

import math

import numpy as np


def _to_chain_matrix(values: np.ndarray, chain_id: np.ndarray) -> np.ndarray:
    """Stack per-chain draws into a (n_chains, n) matrix, truncating to the
    shortest chain so splits stay aligned."""
    values = np.asarray(values, dtype=float)
    chain_id = np.asarray(chain_id)
    chains = np.unique(chain_id)
    per = [values[chain_id == c] for c in chains]
    n = min(len(p) for p in per)
    return np.stack([p[:n] for p in per])


def _split_halves(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[1] // 2
    return np.concatenate([matrix[:, :n], matrix[:, n : 2 * n]], axis=0)


def split_rhat(values: np.ndarray, chain_id: np.ndarray) -> float:
    """Potential scale reduction on split half-chains.

    Returns NaN (undefined) when the within-chain variance vanishes; callers
    count that as a convergence failure.
    """
    matrix = _split_halves(_to_chain_matrix(values, chain_id))
    m, n = matrix.shape
    if m < 2 or n < 2:
        raise ValueError("split_rhat needs >= 2 chains and >= 4 draws per chain")
    means = matrix.mean(axis=1)
    variances = matrix.var(axis=1, ddof=1)
    within = variances.mean()
    if not within > 0 or not np.isfinite(within):
        return math.nan
    between_over_n = means.var(ddof=1)
    var_plus = (n - 1) / n * within + between_over_n
    return float(math.sqrt(var_plus / within))


def split_rhat_matrix(draws: np.ndarray, chain_id: np.ndarray) -> np.ndarray:
    draws = np.atleast_2d(draws)
    return np.array([split_rhat(draws[:, k], chain_id) for k in range(draws.shape[1])])


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance via FFT, one row per chain."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 2 ** math.ceil(math.log2(2 * n))
    f = np.fft.rfft(xc, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real
    return acov / n


def ess(values: np.ndarray, chain_id: np.ndarray) -> float:
    """Effective sample size with Geyer's initial monotone sequence.

    Operates on split half-chains; returns the total-draw count divided by
    the integrated autocorrelation time.
    """
    matrix = _split_halves(_to_chain_matrix(values, chain_id))
    m, n = matrix.shape
    if n < 4:
        raise ValueError("ess needs at least 8 draws per chain")
    acov = _autocovariance(matrix)
    chain_var = acov[:, 0] * n / (n - 1)
    within = chain_var.mean()
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += matrix.mean(axis=1).var(ddof=1)
    if not var_plus > 0 or not np.isfinite(var_plus):
        return math.nan

    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer pairs P_k = rho_{2k} + rho_{2k+1}: truncate at the first negative
    # pair, force the sequence monotone nonincreasing, tau = -1 + 2 sum P_k.
    prev = math.inf
    total = 0.0
    for k in range(n // 2):
        pair = rho[2 * k] + (rho[2 * k + 1] if 2 * k + 1 < n else 0.0)
        if pair < 0:
            break
        pair = min(pair, prev)
        prev = pair
        total += pair
    tau = max(-1.0 + 2.0 * total, 1.0 / math.log10(max(n * m, 10.0)))
    return float(m * n / tau)
