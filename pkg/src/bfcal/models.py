"""Hypothesis models over factorial designs.

A model couples a design with priors and optionally pins one fixed effect at
zero (the point-null variant). Random effects are non-centered: the subject
effects are u = z_u @ (sigma_u * L_u)^T with z_u standard normal and L_u the
lower-triangular factor of the LKJ-distributed correlation matrix; item
effects are analogous.

``UnconstrainedModel`` exposes the log joint density and its analytic
gradient over an unconstrained coordinate vector (scales through log,
correlation factors through tanh-transformed canonical partial correlations),
which is what the gradient-based sampler and the marginal-likelihood
estimator consume. The normalizing constant of exp(logp) over these
coordinates is exactly the marginal likelihood of the data under the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .designs import ConfigurationError, DesignSpec, DesignTable
from .distributions import (
    LKJ,
    Normal,
    PriorFamily,
    TruncatedNormalAtZero,
    lkj_factor_log_density,
)

_LOG_2PI = math.log(2.0 * math.pi)
_TINY = 1e-300

try:  # compiled hot path; the numpy implementation stays as the reference
    from ._kernel import KernelArgs as _KernelArgs
    from ._kernel import logp_grad_kernel as _logp_grad_kernel
except ImportError:  # pragma: no cover
    _KernelArgs = None
    _logp_grad_kernel = None


class DataError(ValueError):
    """Response data incompatible with the model likelihood."""


def default_priors(design: DesignSpec) -> dict[str, PriorFamily]:
    """The per-design prior settings used for simulation and fitting."""
    priors: dict[str, PriorFamily] = {}
    if design.design_id == "D2":
        priors["intercept"] = Normal(6.0, 0.6)
        priors["X"] = Normal(0.0, 0.15)
        priors["sigma_resid"] = TruncatedNormalAtZero(0.0, 0.5)
    else:
        priors["intercept"] = Normal(0.7, 0.1)
        for label in design.fixed_effect_labels[1:]:
            priors[label] = Normal(0.0, 0.1)
        priors["sigma_resid"] = TruncatedNormalAtZero(0.0, 0.1)
    priors["sigma_u"] = TruncatedNormalAtZero(0.0, 0.1)
    priors["rho_u"] = LKJ(2.0)
    if design.has_items:
        priors["sigma_w"] = TruncatedNormalAtZero(0.0, 0.1)
        priors["rho_w"] = LKJ(2.0)
    return priors


@dataclass(frozen=True)
class ModelSpec:
    """One hypothesis over a design: H1 when zeroed_effect is None, else H0."""

    design: DesignSpec
    zeroed_effect: str | None = None
    priors: dict[str, PriorFamily] | None = None
    random_effects: bool = True

    def __post_init__(self):
        if self.priors is None:
            object.__setattr__(self, "priors", default_priors(self.design))
        if self.zeroed_effect is not None:
            if self.zeroed_effect not in self.design.fixed_effect_labels:
                raise ConfigurationError(
                    f"zeroed effect {self.zeroed_effect!r} is not in the design"
                )
            if self.zeroed_effect == "intercept":
                raise ConfigurationError("the intercept cannot be the tested effect")

    @property
    def is_null(self) -> bool:
        return self.zeroed_effect is not None

    def null_variant(self, effect: str) -> "ModelSpec":
        return replace(self, zeroed_effect=effect)


@dataclass
class ParameterSet:
    """One complete draw of all model parameters.

    ``z_u``/``z_w`` are the standardized (non-centered) random effects; the
    actual effects are available as ``u``/``w``. Under a point-null model the
    pinned beta entry is stored as 0.
    """

    beta: np.ndarray
    sigma_resid: float
    z_u: np.ndarray | None = None
    sigma_u: np.ndarray | None = None
    L_u: np.ndarray | None = None
    z_w: np.ndarray | None = None
    sigma_w: np.ndarray | None = None
    L_w: np.ndarray | None = None

    @property
    def u(self) -> np.ndarray | None:
        if self.z_u is None:
            return None
        return self.z_u @ (self.sigma_u[:, None] * self.L_u).T

    @property
    def w(self) -> np.ndarray | None:
        if self.z_w is None:
            return None
        return self.z_w @ (self.sigma_w[:, None] * self.L_w).T


@dataclass
class Dataset:
    table: DesignTable
    y: np.ndarray


def linear_predictor(params: ParameterSet, table: DesignTable, model: ModelSpec) -> np.ndarray:
    """Per-row mean: sum over effects of (beta + u + w) times the contrast code."""
    beta = np.array(params.beta, dtype=float)
    if model.zeroed_effect is not None:
        beta[table.labels.index(model.zeroed_effect)] = 0.0
    eff = np.broadcast_to(beta, table.X.shape).copy()
    u = params.u
    if u is not None:
        eff += u[table.subject]
    w = params.w
    if w is not None:
        eff += w[table.item]
    return (table.X * eff).sum(axis=1)


def log_likelihood(params: ParameterSet, data: Dataset, model: ModelSpec) -> float:
    """Row-wise normal log likelihood of y (or of log y with its Jacobian)."""
    sr = params.sigma_resid
    if not sr > 0:
        return -math.inf
    mu = linear_predictor(params, data.table, model)
    y = np.asarray(data.y, dtype=float)
    if model.design.likelihood == "lognormal":
        if np.any(y <= 0):
            raise DataError("lognormal likelihood requires strictly positive responses")
        resid = np.log(y) - mu
        extra = -float(np.log(y).sum())
    else:
        resid = y - mu
        extra = 0.0
    n = y.size
    return float(
        -n * math.log(sr) - 0.5 * n * _LOG_2PI - (resid @ resid) / (2.0 * sr * sr) + extra
    )


def _halfnormal_logpdf(x: float, fam: TruncatedNormalAtZero) -> float:
    if x < 0:
        return -math.inf
    z = (x - fam.mean) / fam.sd
    return (
        -0.5 * z * z
        - math.log(fam.sd)
        - 0.5 * _LOG_2PI
        - float(special.log_ndtr(fam.mean / fam.sd))
    )


def log_prior(params: ParameterSet, model: ModelSpec) -> float:
    """Joint log prior of a ParameterSet, including the standardized effects."""
    design = model.design
    labels = design.fixed_effect_labels
    out = 0.0
    for k, label in enumerate(labels):
        if label == model.zeroed_effect:
            continue
        fam = model.priors[label]
        z = (params.beta[k] - fam.mean) / fam.sd
        out += -0.5 * z * z - math.log(fam.sd) - 0.5 * _LOG_2PI
    if params.z_u is not None:
        out += -0.5 * float((params.z_u**2).sum()) - 0.5 * params.z_u.size * _LOG_2PI
        for s in params.sigma_u:
            out += _halfnormal_logpdf(float(s), model.priors["sigma_u"])
        out += lkj_factor_log_density(params.L_u, model.priors["rho_u"].eta)
    if params.z_w is not None:
        out += -0.5 * float((params.z_w**2).sum()) - 0.5 * params.z_w.size * _LOG_2PI
        for s in params.sigma_w:
            out += _halfnormal_logpdf(float(s), model.priors["sigma_w"])
        out += lkj_factor_log_density(params.L_w, model.priors["rho_w"].eta)
    out += _halfnormal_logpdf(params.sigma_resid, model.priors["sigma_resid"])
    return float(out)


def _factor_from_cpc(y: np.ndarray, dim: int):
    """Map tanh-transformed canonical partial correlations to the factor L.

    Returns (L, z, c, logjac) where z = tanh(y), c[p] is the sqrt of the
    remaining squared row norm when coordinate p is placed, and logjac is the
    log Jacobian of the full y -> L map (tanh plus row recursion).
    """
    z = np.tanh(y)
    L = np.zeros((dim, dim))
    L[0, 0] = 1.0
    c = np.zeros(y.size)
    logjac = 0.0
    pos = 0
    for i in range(1, dim):
        rem = 1.0
        for j in range(i):
            cj = math.sqrt(rem)
            L[i, j] = z[pos] * cj
            c[pos] = cj
            one_minus = max(1.0 - z[pos] * z[pos], _TINY)
            logjac += math.log(one_minus) + 0.5 * math.log(max(rem, _TINY))
            rem = max(rem * one_minus, _TINY)
            pos += 1
        L[i, i] = math.sqrt(rem)
    return L, z, c, logjac


def _cpc_from_factor(L: np.ndarray) -> np.ndarray:
    dim = L.shape[0]
    y = np.zeros(dim * (dim - 1) // 2)
    pos = 0
    for i in range(1, dim):
        rem = 1.0
        for j in range(i):
            zj = L[i, j] / math.sqrt(rem)
            y[pos] = math.atanh(zj)
            rem -= L[i, j] * L[i, j]
            pos += 1
    return y


def _onehot(index: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, index.size))
    out[index, np.arange(index.size)] = 1.0
    return out


class UnconstrainedModel:
    """Differentiable unconstrained log joint for one (model, dataset) pair.

    Coordinate layout: free betas, z_u (row-major), log sigma_u, correlation
    coordinates for L_u, then the item block when present, then log
    sigma_resid.
    """

    def __init__(self, model: ModelSpec, data: Dataset):
        self.model = model
        self.data = data
        design = model.design
        table = data.table
        self.labels = design.fixed_effect_labels
        self.K = len(self.labels)
        self.X = np.ascontiguousarray(table.X)
        self.n_rows = self.X.shape[0]
        self.zeroed_idx = (
            None if model.zeroed_effect is None else self.labels.index(model.zeroed_effect)
        )
        self.free_beta_idx = np.array(
            [k for k in range(self.K) if k != self.zeroed_idx], dtype=int
        )
        y = np.asarray(data.y, dtype=float)
        self.lognormal = design.likelihood == "lognormal"
        if self.lognormal:
            if np.any(y <= 0):
                raise DataError("lognormal likelihood requires strictly positive responses")
            self._y_work = np.log(y)
            self._loglik_extra = -float(np.log(y).sum())
        else:
            self._y_work = y
            self._loglik_extra = 0.0

        self.has_u = model.random_effects
        self.has_w = model.random_effects and table.item is not None
        self.n_subjects = design.n_subjects
        self.n_items = design.n_items if self.has_w else 0
        self.subject = table.subject
        self.item = table.item
        if self.has_u:
            self._proj_u = _onehot(self.subject, self.n_subjects)
        if self.has_w:
            self._proj_w = _onehot(self.item, self.n_items)

        # prior constants
        self._beta_mean = np.array(
            [model.priors[self.labels[k]].mean for k in self.free_beta_idx]
        )
        self._beta_sd = np.array(
            [model.priors[self.labels[k]].sd for k in self.free_beta_idx]
        )
        self._sr_prior = model.priors["sigma_resid"]
        if not isinstance(self._sr_prior, TruncatedNormalAtZero):
            raise ConfigurationError("sigma_resid prior must be a zero-truncated normal")
        if self.has_u:
            self._su_prior = model.priors["sigma_u"]
            self._eta_u = model.priors["rho_u"].eta
        if self.has_w:
            self._sw_prior = model.priors["sigma_w"]
            self._eta_w = model.priors["rho_w"].eta

        K = self.K
        self.n_cpc = K * (K - 1) // 2
        cols = np.concatenate([np.arange(i) for i in range(1, K)]) if K > 1 else np.array([], int)
        self._cpc_col = cols
        self._cpc_b = {}
        self._cpc_norm = {}
        for tag in ("u", "w"):
            if (tag == "u" and self.has_u) or (tag == "w" and self.has_w):
                eta = self._eta_u if tag == "u" else self._eta_w
                b = eta + 0.5 * (K - 2 - cols)
                self._cpc_b[tag] = b
                self._cpc_norm[tag] = float(
                    ((2 * b - 1) * math.log(2.0) + special.betaln(b, b)).sum()
                )

        # layout offsets
        pos = len(self.free_beta_idx)
        self._o_beta = 0
        if self.has_u:
            self._o_zu = pos
            pos += self.n_subjects * K
            self._o_lsu = pos
            pos += K
            self._o_ycu = pos
            pos += self.n_cpc
        if self.has_w:
            self._o_zw = pos
            pos += self.n_items * K
            self._o_lsw = pos
            pos += K
            self._o_ycw = pos
            pos += self.n_cpc
        self._o_lsr = pos
        self.dim = pos + 1
        self._pack_kernel_args()
        self.use_kernel = self.kernel_args is not None

    def _pack_kernel_args(self):
        if _KernelArgs is None:
            self.kernel_args = None
            return
        empty_b = np.zeros(0)
        dummy_item = np.zeros(self.n_rows, dtype=np.int64)
        self.kernel_args = _KernelArgs(
            X=np.ascontiguousarray(self.X),
            y=np.ascontiguousarray(self._y_work),
            subj=np.ascontiguousarray(self.subject.astype(np.int64)),
            item=(
                np.ascontiguousarray(self.item.astype(np.int64))
                if self.has_w
                else dummy_item
            ),
            loglik_extra=float(self._loglik_extra),
            free_idx=np.ascontiguousarray(self.free_beta_idx.astype(np.int64)),
            beta_mean=np.ascontiguousarray(self._beta_mean),
            beta_sd=np.ascontiguousarray(self._beta_sd),
            has_u=self.has_u,
            S=int(self.n_subjects if self.has_u else 0),
            o_zu=int(getattr(self, "_o_zu", 0)),
            o_lsu=int(getattr(self, "_o_lsu", 0)),
            o_ycu=int(getattr(self, "_o_ycu", 0)),
            su_mean=float(self._su_prior.mean) if self.has_u else 0.0,
            su_sd=float(self._su_prior.sd) if self.has_u else 1.0,
            su_logmass=(
                float(special.log_ndtr(self._su_prior.mean / self._su_prior.sd))
                if self.has_u
                else 0.0
            ),
            cpc_b_u=np.ascontiguousarray(self._cpc_b.get("u", empty_b)),
            cpc_norm_u=float(self._cpc_norm.get("u", 0.0)),
            has_w=self.has_w,
            I=int(self.n_items if self.has_w else 0),
            o_zw=int(getattr(self, "_o_zw", 0)),
            o_lsw=int(getattr(self, "_o_lsw", 0)),
            o_ycw=int(getattr(self, "_o_ycw", 0)),
            sw_mean=float(self._sw_prior.mean) if self.has_w else 0.0,
            sw_sd=float(self._sw_prior.sd) if self.has_w else 1.0,
            sw_logmass=(
                float(special.log_ndtr(self._sw_prior.mean / self._sw_prior.sd))
                if self.has_w
                else 0.0
            ),
            cpc_b_w=np.ascontiguousarray(self._cpc_b.get("w", empty_b)),
            cpc_norm_w=float(self._cpc_norm.get("w", 0.0)),
            o_lsr=int(self._o_lsr),
            sr_mean=float(self._sr_prior.mean),
            sr_sd=float(self._sr_prior.sd),
            sr_logmass=float(special.log_ndtr(self._sr_prior.mean / self._sr_prior.sd)),
        )

    # ---- transforms -----------------------------------------------------

    def to_unconstrained(self, params: ParameterSet) -> np.ndarray:
        q = np.zeros(self.dim)
        q[: len(self.free_beta_idx)] = np.asarray(params.beta)[self.free_beta_idx]
        if self.has_u:
            q[self._o_zu : self._o_zu + self.n_subjects * self.K] = params.z_u.ravel()
            q[self._o_lsu : self._o_lsu + self.K] = np.log(params.sigma_u)
            q[self._o_ycu : self._o_ycu + self.n_cpc] = _cpc_from_factor(params.L_u)
        if self.has_w:
            q[self._o_zw : self._o_zw + self.n_items * self.K] = params.z_w.ravel()
            q[self._o_lsw : self._o_lsw + self.K] = np.log(params.sigma_w)
            q[self._o_ycw : self._o_ycw + self.n_cpc] = _cpc_from_factor(params.L_w)
        q[self._o_lsr] = math.log(params.sigma_resid)
        return q

    def from_unconstrained(self, q: np.ndarray) -> tuple[ParameterSet, float]:
        q = np.asarray(q, dtype=float)
        beta = np.zeros(self.K)
        beta[self.free_beta_idx] = q[: len(self.free_beta_idx)]
        logjac = float(q[self._o_lsr])
        kwargs = {}
        if self.has_u:
            kwargs["z_u"] = q[self._o_zu : self._o_zu + self.n_subjects * self.K].reshape(
                self.n_subjects, self.K
            )
            lsu = q[self._o_lsu : self._o_lsu + self.K]
            kwargs["sigma_u"] = np.exp(lsu)
            L_u, _, _, jac = _factor_from_cpc(q[self._o_ycu : self._o_ycu + self.n_cpc], self.K)
            kwargs["L_u"] = L_u
            logjac += float(lsu.sum()) + jac
        if self.has_w:
            kwargs["z_w"] = q[self._o_zw : self._o_zw + self.n_items * self.K].reshape(
                self.n_items, self.K
            )
            lsw = q[self._o_lsw : self._o_lsw + self.K]
            kwargs["sigma_w"] = np.exp(lsw)
            L_w, _, _, jac = _factor_from_cpc(q[self._o_ycw : self._o_ycw + self.n_cpc], self.K)
            kwargs["L_w"] = L_w
            logjac += float(lsw.sum()) + jac
        params = ParameterSet(beta=beta, sigma_resid=math.exp(q[self._o_lsr]), **kwargs)
        return params, logjac

    # ---- log density ----------------------------------------------------

    def logp(self, q: np.ndarray) -> float:
        return self.logp_and_grad(q)[0]

    def logp_batch(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(Q)
        return np.array([self.logp_and_grad(row, want_grad=False)[0] for row in Q])

    def _scales_in_range(self, q: np.ndarray) -> bool:
        if abs(q[self._o_lsr]) > 300.0:
            return False
        if self.has_u and np.abs(q[self._o_lsu : self._o_lsu + self.K]).max() > 300.0:
            return False
        if self.has_w and np.abs(q[self._o_lsw : self._o_lsw + self.K]).max() > 300.0:
            return False
        return True

    def logp_and_grad(self, q: np.ndarray, want_grad: bool = True):
        """Log joint (likelihood + priors + transform Jacobian) and gradient."""
        q = np.ascontiguousarray(q, dtype=float)
        if self.use_kernel:
            grad = np.zeros(self.dim) if want_grad else np.zeros(0)
            logp = _logp_grad_kernel(q, want_grad, grad, self.kernel_args)
            return float(logp), (grad if want_grad else None)
        return self._logp_and_grad_ref(q, want_grad)

    def _logp_and_grad_ref(self, q: np.ndarray, want_grad: bool = True):
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)) or not self._scales_in_range(q):
            return -math.inf, (np.zeros(self.dim) if want_grad else None)
        K = self.K
        nb = len(self.free_beta_idx)
        grad = np.zeros(self.dim) if want_grad else None

        beta = np.zeros(K)
        beta[self.free_beta_idx] = q[:nb]
        lsr = q[self._o_lsr]
        sr = math.exp(lsr)

        eff = np.broadcast_to(beta, (self.n_rows, K)).copy()
        if self.has_u:
            Zu = q[self._o_zu : self._o_zu + self.n_subjects * K].reshape(self.n_subjects, K)
            lsu = q[self._o_lsu : self._o_lsu + K]
            su = np.exp(lsu)
            ycu = q[self._o_ycu : self._o_ycu + self.n_cpc]
            Lu, zu, cu, _ = _factor_from_cpc(ycu, K)
            Mu = Zu @ Lu.T
            eff += (Mu * su)[self.subject]
        if self.has_w:
            Zw = q[self._o_zw : self._o_zw + self.n_items * K].reshape(self.n_items, K)
            lsw = q[self._o_lsw : self._o_lsw + K]
            sw = np.exp(lsw)
            ycw = q[self._o_ycw : self._o_ycw + self.n_cpc]
            Lw, zw, cw, _ = _factor_from_cpc(ycw, K)
            Mw = Zw @ Lw.T
            eff += (Mw * sw)[self.item]

        mu = (self.X * eff).sum(axis=1)
        resid = self._y_work - mu
        sse = float(resid @ resid)
        inv_var = 1.0 / (sr * sr)
        logp = (
            -self.n_rows * lsr
            - 0.5 * self.n_rows * _LOG_2PI
            - 0.5 * sse * inv_var
            + self._loglik_extra
        )

        # fixed-effect priors
        bdev = (q[:nb] - self._beta_mean) / self._beta_sd
        logp += float(
            (-0.5 * bdev * bdev - np.log(self._beta_sd)).sum()
        ) - 0.5 * nb * _LOG_2PI

        # residual scale: half-normal prior plus log Jacobian
        srp = self._sr_prior
        zr = (sr - srp.mean) / srp.sd
        logp += (
            -0.5 * zr * zr
            - math.log(srp.sd)
            - 0.5 * _LOG_2PI
            - float(special.log_ndtr(srp.mean / srp.sd))
            + lsr
        )

        if want_grad:
            G = resid * inv_var
            GX = G[:, None] * self.X
            gbeta = GX.sum(axis=0)
            grad[:nb] = gbeta[self.free_beta_idx] - bdev / self._beta_sd
            grad[self._o_lsr] = (-self.n_rows + sse * inv_var) + 1.0 - sr * (sr - srp.mean) / (
                srp.sd * srp.sd
            )

        for tag in ("u", "w"):
            if tag == "u":
                if not self.has_u:
                    continue
                Z, ls, s, L, zc, cc = Zu, lsu, su, Lu, zu, cu
                M, proj, prior, o_z, o_ls, o_yc = (
                    Mu,
                    self._proj_u,
                    self._su_prior,
                    self._o_zu,
                    self._o_lsu,
                    self._o_ycu,
                )
            else:
                if not self.has_w:
                    continue
                Z, ls, s, L, zc, cc = Zw, lsw, sw, Lw, zw, cw
                M, proj, prior, o_z, o_ls, o_yc = (
                    Mw,
                    self._proj_w,
                    self._sw_prior,
                    self._o_zw,
                    self._o_lsw,
                    self._o_ycw,
                )
            b = self._cpc_b[tag]

            # standardized effects: standard-normal prior
            logp += -0.5 * float((Z * Z).sum()) - 0.5 * Z.size * _LOG_2PI
            # scales: half-normal prior plus log Jacobian
            zs = (s - prior.mean) / prior.sd
            logp += float(
                (-0.5 * zs * zs - math.log(prior.sd) - 0.5 * _LOG_2PI).sum()
            ) - s.size * float(special.log_ndtr(prior.mean / prior.sd))
            logp += float(ls.sum())
            # correlation coordinates: per-coordinate scaled-Beta prior with
            # the full y -> L Jacobian folded in analytically
            one_minus = np.maximum(1.0 - zc * zc, _TINY)
            logp += float((b * np.log(one_minus)).sum()) - self._cpc_norm[tag]

            if want_grad:
                A = proj @ GX
                grad[o_z : o_z + Z.size] = (A @ (s[:, None] * L) - Z).ravel()
                gs = (A * M).sum(axis=0)
                grad[o_ls : o_ls + K] = s * gs + 1.0 - s * (s - prior.mean) / (
                    prior.sd * prior.sd
                )
                gL = s[:, None] * (A.T @ Z)
                gyc = np.empty(self.n_cpc)
                pos = 0
                for i in range(1, K):
                    gl = gL[i, :i]
                    Lrow = L[i, :i]
                    # suffix sums: effect of z_ij on later entries of the row
                    T = np.empty(i)
                    acc = gL[i, i] * L[i, i]
                    for j in range(i - 1, -1, -1):
                        T[j] = acc
                        acc += gl[j] * Lrow[j]
                    zrow = zc[pos : pos + i]
                    crow = cc[pos : pos + i]
                    brow = b[pos : pos + i]
                    gyc[pos : pos + i] = (
                        gl * crow * (1.0 - zrow * zrow) - T * zrow - 2.0 * brow * zrow
                    )
                    pos += i
                grad[o_yc : o_yc + self.n_cpc] = gyc

        return float(logp), grad

    # ---- starting points -------------------------------------------------

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        params = draw_from_prior(self.model, rng)
        return self.to_unconstrained(params)


def draw_from_prior(model: ModelSpec, rng: np.random.Generator) -> ParameterSet:
    """Draw a full ParameterSet from the model priors (pinned effect stays 0)."""
    from .distributions import sample, sample_lkj_factor  # local to avoid cycle noise

    design = model.design
    K = design.n_fixed
    beta = np.zeros(K)
    for k, label in enumerate(design.fixed_effect_labels):
        if label == model.zeroed_effect:
            continue
        beta[k] = sample(model.priors[label], rng)
    kwargs = {}
    if model.random_effects:
        kwargs["sigma_u"] = np.array(
            [sample(model.priors["sigma_u"], rng) for _ in range(K)]
        )
        kwargs["L_u"] = sample_lkj_factor(K, model.priors["rho_u"].eta, rng)
        kwargs["z_u"] = rng.standard_normal((design.n_subjects, K))
        if design.has_items:
            kwargs["sigma_w"] = np.array(
                [sample(model.priors["sigma_w"], rng) for _ in range(K)]
            )
            kwargs["L_w"] = sample_lkj_factor(K, model.priors["rho_w"].eta, rng)
            kwargs["z_w"] = rng.standard_normal((design.n_items, K))
    sigma_resid = sample(model.priors["sigma_resid"], rng)
    return ParameterSet(beta=beta, sigma_resid=sigma_resid, **kwargs)
