"""Compiled hot path for the unconstrained log joint and its gradient.

Mirrors the reference implementation in models.UnconstrainedModel; the test
suite asserts the two paths agree to machine precision. Import is optional:
when numba is unavailable the model falls back to the numpy path.
"""

from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

_LOG_2PI = math.log(2.0 * math.pi)

KernelArgs = namedtuple(
    "KernelArgs",
    [
        "X", "y", "subj", "item", "loglik_extra",
        "free_idx", "beta_mean", "beta_sd",
        "has_u", "S", "o_zu", "o_lsu", "o_ycu",
        "su_mean", "su_sd", "su_logmass", "cpc_b_u", "cpc_norm_u",
        "has_w", "I", "o_zw", "o_lsw", "o_ycw",
        "sw_mean", "sw_sd", "sw_logmass", "cpc_b_w", "cpc_norm_w",
        "o_lsr", "sr_mean", "sr_sd", "sr_logmass",
    ],
)


@njit(cache=True)
def _build_factor(q, off, K, L, zc, cc):
    """Fill L, tanh values and running sqrt-remainders from CPC coordinates."""
    L[0, 0] = 1.0
    pos = 0
    for i in range(1, K):
        rem = 1.0
        for j in range(i):
            z = math.tanh(q[off + pos])
            cj = math.sqrt(rem)
            L[i, j] = z * cj
            zc[pos] = z
            cc[pos] = cj
            om = 1.0 - z * z
            if om < 1e-300:
                om = 1e-300
            rem *= om
            if rem < 1e-300:
                rem = 1e-300
            pos += 1
        L[i, i] = math.sqrt(rem)


@njit(cache=True)
def logp_grad_kernel(q, want_grad, grad, a):
    N, K = a.X.shape
    nb = a.free_idx.size
    for idx in range(q.size):
        if not math.isfinite(q[idx]):
            return -math.inf
    if abs(q[a.o_lsr]) > 300.0:
        return -math.inf
    if a.has_u:
        for k in range(K):
            if abs(q[a.o_lsu + k]) > 300.0:
                return -math.inf
    if a.has_w:
        for k in range(K):
            if abs(q[a.o_lsw + k]) > 300.0:
                return -math.inf

    lsr = q[a.o_lsr]
    sr = math.exp(lsr)
    inv_var = 1.0 / (sr * sr)

    beta_full = np.zeros(K)
    for i in range(nb):
        beta_full[a.free_idx[i]] = q[i]

    n_cpc = K * (K - 1) // 2
    su = np.zeros(K)
    Lu = np.zeros((K, K))
    zu = np.zeros(n_cpc)
    cu = np.zeros(n_cpc)
    Mu = np.zeros((a.S, K))
    if a.has_u:
        for k in range(K):
            su[k] = math.exp(q[a.o_lsu + k])
        _build_factor(q, a.o_ycu, K, Lu, zu, cu)
        for row in range(a.S):
            base = a.o_zu + row * K
            for k in range(K):
                acc = 0.0
                for j in range(k + 1):
                    acc += q[base + j] * Lu[k, j]
                Mu[row, k] = acc

    sw = np.zeros(K)
    Lw = np.zeros((K, K))
    zw = np.zeros(n_cpc)
    cw = np.zeros(n_cpc)
    Mw = np.zeros((a.I, K))
    if a.has_w:
        for k in range(K):
            sw[k] = math.exp(q[a.o_lsw + k])
        _build_factor(q, a.o_ycw, K, Lw, zw, cw)
        for row in range(a.I):
            base = a.o_zw + row * K
            for k in range(K):
                acc = 0.0
                for j in range(k + 1):
                    acc += q[base + j] * Lw[k, j]
                Mw[row, k] = acc

    # likelihood pass
    sse = 0.0
    gbeta = np.zeros(K)
    Au = np.zeros((a.S, K))
    Aw = np.zeros((a.I, K))
    for n in range(N):
        sn = a.subj[n]
        wn = a.item[n]
        mu_n = 0.0
        for k in range(K):
            c = beta_full[k]
            if a.has_u:
                c += su[k] * Mu[sn, k]
            if a.has_w:
                c += sw[k] * Mw[wn, k]
            mu_n += a.X[n, k] * c
        e = a.y[n] - mu_n
        sse += e * e
        if want_grad:
            g = e * inv_var
            for k in range(K):
                gx = g * a.X[n, k]
                gbeta[k] += gx
                if a.has_u:
                    Au[sn, k] += gx
                if a.has_w:
                    Aw[wn, k] += gx

    logp = -N * lsr - 0.5 * N * _LOG_2PI - 0.5 * sse * inv_var + a.loglik_extra

    # fixed-effect priors
    for i in range(nb):
        dev = (q[i] - a.beta_mean[i]) / a.beta_sd[i]
        logp += -0.5 * dev * dev - math.log(a.beta_sd[i]) - 0.5 * _LOG_2PI
        if want_grad:
            grad[i] = gbeta[a.free_idx[i]] - dev / a.beta_sd[i]

    # residual scale: half-normal prior plus log Jacobian
    zr = (sr - a.sr_mean) / a.sr_sd
    logp += -0.5 * zr * zr - math.log(a.sr_sd) - 0.5 * _LOG_2PI - a.sr_logmass + lsr
    if want_grad:
        grad[a.o_lsr] = (
            (-N + sse * inv_var) + 1.0 - sr * (sr - a.sr_mean) / (a.sr_sd * a.sr_sd)
        )

    # random-effect blocks
    for tag in range(2):
        if tag == 0:
            if not a.has_u:
                continue
            size, o_z, o_ls, o_yc = a.S, a.o_zu, a.o_lsu, a.o_ycu
            s, L, zc, cc, M, A = su, Lu, zu, cu, Mu, Au
            pm, psd, plm, cb, cn = a.su_mean, a.su_sd, a.su_logmass, a.cpc_b_u, a.cpc_norm_u
        else:
            if not a.has_w:
                continue
            size, o_z, o_ls, o_yc = a.I, a.o_zw, a.o_lsw, a.o_ycw
            s, L, zc, cc, M, A = sw, Lw, zw, cw, Mw, Aw
            pm, psd, plm, cb, cn = a.sw_mean, a.sw_sd, a.sw_logmass, a.cpc_b_w, a.cpc_norm_w

        zsq = 0.0
        for idx in range(size * K):
            v = q[o_z + idx]
            zsq += v * v
        logp += -0.5 * zsq - 0.5 * size * K * _LOG_2PI
        for k in range(K):
            zs = (s[k] - pm) / psd
            logp += -0.5 * zs * zs - math.log(psd) - 0.5 * _LOG_2PI - plm + q[o_ls + k]
        for p in range(n_cpc):
            om = 1.0 - zc[p] * zc[p]
            if om < 1e-300:
                om = 1e-300
            logp += cb[p] * math.log(om)
        logp -= cn

        if want_grad:
            for row in range(size):
                base = o_z + row * K
                for j in range(K):
                    acc = 0.0
                    for k in range(j, K):
                        acc += A[row, k] * s[k] * L[k, j]
                    grad[base + j] = acc - q[base + j]
            for k in range(K):
                gs = 0.0
                for row in range(size):
                    gs += A[row, k] * M[row, k]
                grad[o_ls + k] = s[k] * gs + 1.0 - s[k] * (s[k] - pm) / (psd * psd)
            pos = 0
            for i in range(1, K):
                # gL[i, j] = s[i] * sum_row A[row, i] Z[row, j]; the suffix sum
                # tracks how z_ij moves the later entries of row i
                acc = 0.0
                for row in range(size):
                    acc += A[row, i] * q[o_z + row * K + i]
                suffix = s[i] * acc * L[i, i]
                for j in range(i - 1, -1, -1):
                    glj = 0.0
                    for row in range(size):
                        glj += A[row, i] * q[o_z + row * K + j]
                    glj *= s[i]
                    zj = zc[pos + j]
                    grad[o_yc + pos + j] = (
                        glj * cc[pos + j] * (1.0 - zj * zj)
                        - suffix * zj
                        - 2.0 * cb[pos + j] * zj
                    )
                    suffix += glj * L[i, j]
                pos += i

    return logp


@njit(cache=True)
def uturn_kernel(inv_mass, r_minus, r_plus, r_total, left_sum, right_inner, right_sum, left_inner):
    """Generalized U-turn tests for a merged trajectory tree.

    Checks the full tree and both across-boundary extensions; returns True
    when any projected momentum sum turns back.
    """
    dim = inv_mass.size
    t_m = 0.0
    t_p = 0.0
    l_m = 0.0
    l_ri = 0.0
    r_li = 0.0
    r_p = 0.0
    for i in range(dim):
        sharp_m = inv_mass[i] * r_minus[i]
        sharp_p = inv_mass[i] * r_plus[i]
        tot = r_total[i]
        t_m += tot * sharp_m
        t_p += tot * sharp_p
        left = left_sum[i] + right_inner[i]
        l_m += left * sharp_m
        l_ri += left * inv_mass[i] * right_inner[i]
        right = right_sum[i] + left_inner[i]
        r_li += right * inv_mass[i] * left_inner[i]
        r_p += right * sharp_p
    return t_m <= 0 or t_p <= 0 or l_m <= 0 or l_ri <= 0 or r_li <= 0 or r_p <= 0


@njit(cache=True)
def leapfrog_kernel(q, r, grad, step, inv_mass, a):
    """One velocity-Verlet step fused with the density evaluation.

    Returns (q1, r1, logp1, grad1, kinetic_quadform1).
    """
    dim = q.size
    r_half = np.empty(dim)
    q1 = np.empty(dim)
    for i in range(dim):
        r_half[i] = r[i] + 0.5 * step * grad[i]
        q1[i] = q[i] + step * inv_mass[i] * r_half[i]
    grad1 = np.zeros(dim)
    logp1 = logp_grad_kernel(q1, True, grad1, a)
    r1 = np.empty(dim)
    kin = 0.0
    for i in range(dim):
        r1[i] = r_half[i] + 0.5 * step * grad1[i]
        kin += r1[i] * inv_mass[i] * r1[i]
    return q1, r1, logp1, grad1, kin
