"""Gradient-based MCMC over an unconstrained log density.

Transitions build a trajectory by repeated doubling of a leapfrog path and
select the next state multinomially by density weight, stopping on the
generalized no-U-turn condition or on divergence (energy error beyond
1000 nats). Warmup adapts the step size by dual averaging toward a target
acceptance statistic and a diagonal mass matrix over expanding windows
(75-iteration step-size-only opening, doubling covariance windows, 50
closing iterations), mirroring common practice.

The target object must expose ``dim`` and ``logp_and_grad(q)``; an optional
``initial_point(rng)`` provides starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .diagnostics import split_rhat_matrix

try:  # fused compiled step for targets that expose kernel_args
    from ._kernel import leapfrog_kernel as _leapfrog_kernel
    from ._kernel import uturn_kernel as _uturn_kernel
except ImportError:  # pragma: no cover
    _leapfrog_kernel = None
    _uturn_kernel = None

DIVERGENCE_THRESHOLD = 1000.0  # nats of energy error


class SamplerFailure(RuntimeError):
    """Raised when warmup produces no usable trajectory at all."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 2000
    n_draws_total: int = 8000
    target_accept: float = 0.9
    max_treedepth: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_warmup < 100:
            raise ValueError("n_warmup must be >= 100")
        if self.n_draws_total < self.n_chains:
            raise ValueError("n_draws_total must be >= n_chains")
        if self.n_draws_total % self.n_chains != 0:
            raise ValueError("n_draws_total must be divisible by n_chains")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")

    @property
    def draws_per_chain(self) -> int:
        return self.n_draws_total // self.n_chains


@dataclass
class Draws:
    positions: np.ndarray      # (n_draws_total, dim), post-warmup, all chains
    chain_id: np.ndarray       # (n_draws_total,)
    energy: np.ndarray
    divergent: np.ndarray      # bool
    treedepth: np.ndarray
    accept_stat: np.ndarray
    step_sizes: np.ndarray     # per chain

    @property
    def n_draws(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass
class Diagnostics:
    split_rhat: np.ndarray
    rhat_max: float
    n_divergent: int
    max_treedepth_hits: int
    step_sizes: np.ndarray
    warmup_divergent: int = 0


def write_draws_csv(draws: "Draws", path) -> None:
    """Dump retained draws, one row per draw with its chain id."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["chain", "energy", "divergent", "treedepth"]
            + [f"q{k}" for k in range(draws.dim)]
        )
        for i in range(draws.n_draws):
            writer.writerow(
                [
                    int(draws.chain_id[i]),
                    repr(float(draws.energy[i])),
                    int(draws.divergent[i]),
                    int(draws.treedepth[i]),
                ]
                + [repr(float(v)) for v in draws.positions[i]]
            )


def leapfrog(position, momentum, step, grad_fn, inv_mass=None):
    """One velocity-Verlet step of the Hamiltonian dynamics.

    ``grad_fn`` returns the gradient of the log density; ``inv_mass`` is the
    diagonal of the inverse mass matrix (unit mass when omitted).
    """
    position = np.asarray(position, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    if inv_mass is None:
        inv_mass = np.ones_like(position)
    r_half = momentum + 0.5 * step * grad_fn(position)
    q_new = position + step * inv_mass * r_half
    r_new = r_half + 0.5 * step * grad_fn(q_new)
    return q_new, r_new


def _kinetic(r: np.ndarray, inv_mass: np.ndarray) -> float:
    return 0.5 * float(r @ (inv_mass * r))


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a > b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


class _TreeState:
    """End points, selected sample and bookkeeping of one trajectory tree."""

    __slots__ = (
        "q_minus", "r_minus", "grad_minus", "q_plus", "r_plus", "grad_plus",
        "r_sum", "q", "logp", "grad", "r_sel", "log_weight", "alive",
        "alpha", "n_alpha", "divergent",
    )

    def __init__(self, q, r, logp, grad, log_weight, alpha, n_alpha, divergent):
        # arrays are never mutated in place, so aliasing is safe
        self.q_minus = q
        self.r_minus = r
        self.grad_minus = grad
        self.q_plus = q
        self.r_plus = r
        self.grad_plus = grad
        self.r_sum = r
        self.q = q
        self.logp = logp
        self.grad = grad
        self.r_sel = r
        self.log_weight = log_weight
        self.alive = True
        self.alpha = alpha
        self.n_alpha = n_alpha
        self.divergent = divergent


class _Chain:
    def __init__(self, target, config: SamplerConfig, chain_idx: int):
        self.target = target
        self.config = config
        self.rng = rng_mod.substream(config.seed, "chain", chain_idx)
        self.inv_mass = np.ones(target.dim)
        self._kernel_args = getattr(target, "kernel_args", None)
        if self._kernel_args is not None and _leapfrog_kernel is None:
            self._kernel_args = None
        if hasattr(target, "initial_point"):
            self.q = np.asarray(target.initial_point(self.rng), dtype=float)
        else:
            self.q = 0.5 * self.rng.uniform(-1.0, 1.0, size=target.dim)
        self.logp, self.grad = target.logp_and_grad(self.q)
        if not math.isfinite(self.logp):
            raise SamplerFailure("initial point has non-finite log density")

    # -- step-size heuristic (double/halve until the acceptance crosses 1/2) --

    def find_reasonable_step(self) -> float:
        step = 1.0
        r = self.rng.standard_normal(self.q.size) / np.sqrt(self.inv_mass)
        h0 = self.logp - _kinetic(r, self.inv_mass)

        def joint(step_try):
            self._leapfrog(self.q, r, self.grad, step_try)
            if not math.isfinite(self._cached_logp):
                return -math.inf
            return self._cached_logp - 0.5 * self._cached_kin

        comparison = joint(step) - h0
        direction = 1 if comparison > math.log(0.5) else -1
        for _ in range(60):
            step *= 2.0**direction
            comparison = joint(step) - h0
            if direction == 1 and not comparison > math.log(0.5):
                break
            if direction == -1 and not comparison < math.log(0.5):
                break
            if step < 1e-12 or step > 1e7:
                break
        return step

    def _leapfrog(self, q, r, grad, step):
        """Returns (q1, r1, logp1, grad1) and caches logp1 and the kinetic
        quadratic form of r1."""
        if self._kernel_args is not None:
            q_new, r_new, logp_new, grad_new, kin = _leapfrog_kernel(
                q, r, grad, step, self.inv_mass, self._kernel_args
            )
            self._cached_logp = logp_new
            self._cached_kin = kin
            return q_new, r_new, logp_new, grad_new
        r_half = r + 0.5 * step * grad
        q_new = q + step * self.inv_mass * r_half
        logp_new, grad_new = self.target.logp_and_grad(q_new)
        if grad_new is None or not np.all(np.isfinite(grad_new)):
            logp_new = -math.inf
            grad_new = np.zeros_like(q)
        r_new = r_half + 0.5 * step * grad_new
        self._cached_logp = logp_new
        self._cached_kin = float(r_new @ (self.inv_mass * r_new))
        return q_new, r_new, logp_new, grad_new

    # -- trajectory tree ---------------------------------------------------

    def _base_case(self, state: _TreeState, direction: int, step: float, h0: float):
        if direction == -1:
            q, r, grad = state.q_minus, state.r_minus, state.grad_minus
        else:
            q, r, grad = state.q_plus, state.r_plus, state.grad_plus
        q1, r1, logp1, grad1 = self._leapfrog(q, r, grad, direction * step)
        h1 = logp1 - 0.5 * self._cached_kin if math.isfinite(logp1) else -math.inf
        delta = h1 - h0 if math.isfinite(h1) else -math.inf
        divergent = (not math.isfinite(delta)) or (-delta > DIVERGENCE_THRESHOLD)
        leaf = _TreeState(
            q1, r1, logp1, grad1,
            log_weight=delta,
            alpha=min(1.0, math.exp(min(delta, 0.0))),
            n_alpha=1,
            divergent=divergent,
        )
        leaf.alive = not divergent
        return leaf

    def _build_tree(self, state: _TreeState, direction: int, depth: int, step: float, h0: float):
        if depth == 0:
            return self._base_case(state, direction, step, h0)
        inner = self._build_tree(state, direction, depth - 1, step, h0)
        if inner.alive:
            outer = self._build_tree(inner, direction, depth - 1, step, h0)
            self._merge(inner, outer, direction, root=False)
        return inner

    def _merge(self, state: _TreeState, other: _TreeState, direction: int, root: bool):
        # ``other`` extends the trajectory in ``direction``; capture the
        # momenta at the boundary between the two halves before overwriting.
        if direction == -1:
            left_sum, right_sum = other.r_sum, state.r_sum
            left_inner, right_inner = other.r_plus, state.r_minus
            state.q_minus = other.q_minus
            state.r_minus = other.r_minus
            state.grad_minus = other.grad_minus
        else:
            left_sum, right_sum = state.r_sum, other.r_sum
            left_inner, right_inner = state.r_plus, other.r_minus
            state.q_plus = other.q_plus
            state.r_plus = other.r_plus
            state.grad_plus = other.grad_plus

        state.alpha += other.alpha
        state.n_alpha += other.n_alpha
        state.divergent |= other.divergent
        state.alive &= other.alive
        if not state.alive:
            return

        if not root:
            state.log_weight = _logaddexp(state.log_weight, other.log_weight)
        accept_log = other.log_weight - state.log_weight
        if accept_log > 0 or self.rng.random() < math.exp(accept_log):
            state.q = other.q
            state.logp = other.logp
            state.grad = other.grad
            state.r_sel = other.r_sel
        if root:
            state.log_weight = _logaddexp(state.log_weight, other.log_weight)

        state.r_sum = state.r_sum + other.r_sum

        # generalized U-turn checks on the merged tree and across the
        # boundary between its two halves
        if _uturn_kernel is not None:
            if _uturn_kernel(
                self.inv_mass, state.r_minus, state.r_plus, state.r_sum,
                left_sum, right_inner, right_sum, left_inner,
            ):
                state.alive = False
            return

        def uturn(r_sum, r_a, r_b) -> bool:
            return (r_sum @ (self.inv_mass * r_a)) <= 0 or (
                r_sum @ (self.inv_mass * r_b)
            ) <= 0

        if uturn(state.r_sum, state.r_minus, state.r_plus):
            state.alive = False
            return
        if uturn(left_sum + right_inner, state.r_minus, right_inner):
            state.alive = False
            return
        if uturn(right_sum + left_inner, left_inner, state.r_plus):
            state.alive = False

    def transition(self, step: float):
        """One sampler transition; returns telemetry for the new state."""
        r0 = self.rng.standard_normal(self.q.size) / np.sqrt(self.inv_mass)
        h0 = self.logp - _kinetic(r0, self.inv_mass)
        state = _TreeState(
            self.q, r0, self.logp, self.grad,
            log_weight=0.0, alpha=0.0, n_alpha=0, divergent=False,
        )
        state.r_sel = r0
        depth = 0
        while depth < self.config.max_treedepth and state.alive:
            direction = 1 if self.rng.random() < 0.5 else -1
            sub = self._build_tree(state, direction, depth, step, h0)
            self._merge(state, sub, direction, root=True)
            depth += 1
        self.q = state.q
        self.logp = state.logp
        self.grad = state.grad
        energy = -state.logp + _kinetic(state.r_sel, self.inv_mass)
        accept = state.alpha / max(state.n_alpha, 1)
        hit_max = depth == self.config.max_treedepth and state.alive
        return energy, accept, state.divergent, depth, hit_max


class _DualAveraging:
    gamma = 0.05
    t0 = 10.0
    kappa = 0.75

    def __init__(self, step0: float, target: float):
        self.mu = math.log(10.0 * step0)
        self.target = target
        self.log_step = math.log(step0)
        self.log_step_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count ** (-self.kappa)
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar
        return math.exp(self.log_step)

    def adapted_step(self) -> float:
        return math.exp(self.log_step_bar)


def _mass_windows(n_warmup: int):
    """(init_end, [window ends...], term_start) in warmup iterations."""
    init, term, base = 75, 50, 25
    if n_warmup < init + term + 2 * base:
        init = max(1, int(0.15 * n_warmup))
        term = max(1, int(0.10 * n_warmup))
        base = max(1, n_warmup - init - term)
    ends = []
    start = init
    width = base
    while start + width < n_warmup - term:
        if start + 3 * width >= n_warmup - term:
            width = n_warmup - term - start  # final window absorbs the rest
        ends.append(start + width)
        start += width
        width *= 2
    if not ends:
        ends.append(n_warmup - term)
    ends[-1] = n_warmup - term
    return init, ends


class _Welford:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        return self.m2 / max(self.n - 1, 1)


def _run_chain(target, config: SamplerConfig, chain_idx: int):
    chain = _Chain(target, config, chain_idx)
    dim = target.dim
    n_keep = config.draws_per_chain
    init_end, window_ends = _mass_windows(config.n_warmup)
    mass_end = window_ends[-1]
    windows = iter(window_ends)
    next_window = next(windows)
    welford = _Welford(dim)

    step = chain.find_reasonable_step()
    averager = _DualAveraging(step, config.target_accept)
    warmup_divergent = 0
    any_alive = False

    for it in range(config.n_warmup):
        energy, accept, divergent, depth, hit_max = chain.transition(step)
        warmup_divergent += divergent
        any_alive |= not divergent
        step = averager.update(accept)
        if init_end <= it < mass_end:
            welford.add(chain.q)
        if it + 1 == next_window:
            if welford.n >= 10:
                shrink = welford.n / (welford.n + 5.0)
                reg_var = shrink * welford.variance() + (1.0 - shrink) * 1e-3
                chain.inv_mass = np.maximum(reg_var, 1e-12)
            welford = _Welford(dim)
            step = chain.find_reasonable_step()
            averager = _DualAveraging(step, config.target_accept)
            try:
                next_window = next(windows)
            except StopIteration:
                next_window = -1
    if not any_alive:
        raise SamplerFailure(
            "every warmup transition diverged",
            diagnostics={"chain": chain_idx, "warmup_divergent": warmup_divergent},
        )

    step = averager.adapted_step()
    positions = np.empty((n_keep, dim))
    energy = np.empty(n_keep)
    divergent = np.zeros(n_keep, dtype=bool)
    treedepth = np.empty(n_keep, dtype=int)
    accept_stat = np.empty(n_keep)
    hit_count = 0
    for it in range(n_keep):
        e, a, d, depth, hit_max = chain.transition(step)
        positions[it] = chain.q
        energy[it] = e
        divergent[it] = d
        treedepth[it] = depth
        accept_stat[it] = a
        hit_count += hit_max
    return positions, energy, divergent, treedepth, accept_stat, step, hit_count, warmup_divergent


def sample_posterior(target, config: SamplerConfig) -> tuple[Draws, Diagnostics]:
    """Run all chains and assemble draws plus convergence diagnostics."""
    per_chain = []
    for c in range(config.n_chains):
        per_chain.append(_run_chain(target, config, c))

    positions = np.concatenate([p[0] for p in per_chain])
    chain_id = np.concatenate(
        [np.full(config.draws_per_chain, c) for c in range(config.n_chains)]
    )
    draws = Draws(
        positions=positions,
        chain_id=chain_id,
        energy=np.concatenate([p[1] for p in per_chain]),
        divergent=np.concatenate([p[2] for p in per_chain]),
        treedepth=np.concatenate([p[3] for p in per_chain]),
        accept_stat=np.concatenate([p[4] for p in per_chain]),
        step_sizes=np.array([p[5] for p in per_chain]),
    )
    if config.n_chains >= 2:
        rhat = split_rhat_matrix(positions, chain_id)
    else:
        rhat = np.full(draws.dim, math.nan)
    finite = rhat[np.isfinite(rhat)]
    rhat_max = float(finite.max()) if finite.size else math.nan
    diagnostics = Diagnostics(
        split_rhat=rhat,
        rhat_max=rhat_max,
        n_divergent=int(draws.divergent.sum()),
        max_treedepth_hits=int(sum(p[6] for p in per_chain)),
        step_sizes=draws.step_sizes,
        warmup_divergent=int(sum(p[7] for p in per_chain)),
    )
    return draws, diagnostics
