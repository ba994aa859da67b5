"""Acceptance suite: one test per release criterion, at the stated tolerance.

Each test prints a PASS/FAIL line with the measured quantity. The desk-scale
replication (criterion 3) runs for hours and is marked slow; its records are
cached under tests/_acceptance_cache keyed by the config hash, and missing
simulations are recomputed on demand (delete the cache to force a full
rerun).
"""

import math
import os
import time

import numpy as np
import pytest

from bfcal.analysis import (
    DEFAULT_SCALE,
    consistency_bands,
    jzs_paired_bf,
    pav_reliability,
)
from bfcal.analytic import ConjugateNormalModel
from bfcal.bridge import (
    BridgeConfig,
    Proposal,
    bridge_logml,
    fit_proposal,
)
from bfcal.designs import d1_spec, d2_spec, d3_spec
from bfcal.diagnostics import ess
from bfcal.models import ModelSpec, UnconstrainedModel
from bfcal.rng import substream
from bfcal.sampler import SamplerConfig, leapfrog, sample_posterior
from bfcal.sbc import (
    SbcConfig,
    analytic_sbc_records,
    deviations,
    marginal_check,
    partition_by_warning,
    run_sbc,
)
from bfcal.simulate import draw_parameters, simulate_dataset
from bfcal.validate import _brute_isotonic, _brute_jzs, jzs_paired_log_bf_from_stats

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_acceptance_cache")


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# --------------------------------------------------------------------------
# 1. bridge-sampling oracle on the conjugate model
# --------------------------------------------------------------------------

def test_criterion_1_bridge_oracle():
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
    t0 = time.perf_counter()
    hits = 0
    gaps = []
    for rep in range(100):
        rng = substream(1001, "crit1", rep)
        y = model.simulate("H1", rng)
        exact = model.logml_h1(y)
        draws = model.posterior_draws(y, 20_000, rng)
        proposal = fit_proposal(draws)
        res_p = bridge_logml(model.log_joint_h1(y), draws, proposal, rng=rng, method="plain")
        res_w = bridge_logml(model.log_joint_h1(y), draws, proposal, rng=rng, method="warp3")
        hits += abs(res_p.logml - exact) < 0.01 and abs(res_w.logml - exact) < 0.01
        gaps.append(res_w.logml - res_p.logml)
    elapsed = time.perf_counter() - t0
    gaps = np.array(gaps)
    gap_se = gaps.std(ddof=1) / 10.0
    agree = abs(gaps.mean()) < 3 * gap_se + 1e-4
    _report(
        "criterion 1 (bridge oracle)",
        hits >= 95 and elapsed < 60 and agree,
        f"{hits}/100 reps within 0.01 nats, plain-vs-warp gap "
        f"{gaps.mean():+.2e} (3SE={3*gap_se:.2e}), runtime {elapsed:.1f}s",
    )


# --------------------------------------------------------------------------
# 2. end-to-end marginal calibration identity on the analytic model
# --------------------------------------------------------------------------

def test_criterion_2_marginal_identity():
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
    records = analytic_sbc_records(model, prior_h1=0.2, n_sims=1000, base_seed=20250801)
    posterior_mean = float(np.mean([r.posterior_h1 for r in records]))
    summary = marginal_check(records, 0.2)
    bf01 = 1.0 / jzs_paired_bf(deviations(records), DEFAULT_SCALE)
    ok = abs(posterior_mean - 0.2) < 3 * summary.se and bf01 > 10
    _report(
        "criterion 2 (marginal identity)",
        ok,
        f"|mean posterior - 0.2| = {abs(posterior_mean - 0.2):.4f} "
        f"(3SE = {3*summary.se:.4f}), BF01 = {bf01:.1f}",
    )


# --------------------------------------------------------------------------
# 3. desk-scale replication of the subjects-only 2x2 design
# --------------------------------------------------------------------------

def _desk_scale_config(effect, base_seed):
    return SbcConfig(
        design=d1_spec(),
        effect=effect,
        prior_h1=0.5,
        n_sims=100,
        sampler=SamplerConfig(
            n_chains=4, n_warmup=500, n_draws_total=8000, target_accept=0.9
        ),
        bridge=BridgeConfig(method="warp3"),
        base_seed=base_seed,
    )


@pytest.mark.slow
@pytest.mark.parametrize("effect,base_seed", [("meA", 20250811), ("meB", 20250812), ("int", 20250813)])
def test_criterion_3_desk_scale_replication(effect, base_seed):
    from bfcal.config import config_hash

    config = _desk_scale_config(effect, base_seed)
    os.makedirs(CACHE_DIR, exist_ok=True)
    cache = os.path.join(CACHE_DIR, f"d1_{effect}_{config_hash(config)[:10]}.jsonl")
    jobs = int(os.environ.get("BFCAL_TEST_JOBS", os.cpu_count() or 1))
    records = run_sbc(config, jobs=jobs, out_path=cache, resume=True)

    ok_records = [r for r in records if r.status == "ok"]
    clean, warned = partition_by_warning(ok_records)
    summary = marginal_check(clean, 0.5)
    ci_contains_zero = summary.ci_low < 0 < summary.ci_high
    bf01 = 1.0 / jzs_paired_bf(deviations(clean), DEFAULT_SCALE)
    divergence_counts = [r.n_divergent for r in ok_records]
    modal_divergences = max(set(divergence_counts), key=divergence_counts.count)
    _report(
        f"criterion 3 (desk-scale D1, {effect})",
        ci_contains_zero and bf01 > 1,
        f"clean n={len(clean)}, warned n={len(warned)}, errors={len(records)-len(ok_records)}, "
        f"mean dev = {summary.mean_deviation:+.4f}, "
        f"CI = ({summary.ci_low:+.4f}, {summary.ci_high:+.4f}), BF01 = {bf01:.2f}, "
        f"modal divergence count = {modal_divergences}",
    )


# --------------------------------------------------------------------------
# 4. warning pathway and warning-stratified analysis
# --------------------------------------------------------------------------

def test_criterion_4_warning_pathway():
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=10)
    rng = substream(1004, "crit4")
    y = model.simulate("H1", rng)
    draws = model.posterior_draws(y, 20_000, rng)
    proposal = fit_proposal(draws)
    inflated = Proposal(mean=proposal.mean, chol_cov=proposal.chol_cov * 10.0)  # cov x100
    res = bridge_logml(
        model.log_joint_h1(y), draws, inflated, maxiter=1000, tol=1e-10,
        rng=substream(1004, "bridge"), method="plain",
    )
    forced = res.n_iterations_first == 1000 and res.warning

    # the warning-stratified analysis must still run on a mixed population
    records = analytic_sbc_records(model, prior_h1=0.5, n_sims=200, base_seed=77)
    for rec in records[::3]:
        rec.warning = True
    clean, warned = partition_by_warning(records)
    s_clean = marginal_check(clean, 0.5)
    s_warned = marginal_check(warned, 0.5)
    analysis_runs = math.isfinite(s_clean.mean_deviation) and math.isfinite(
        s_warned.mean_deviation
    )
    _report(
        "criterion 4 (warning pathway)",
        forced and analysis_runs,
        f"first pass iterations = {res.n_iterations_first}, warning = {res.warning}, "
        f"stratified analysis ran on {s_clean.n}+{s_warned.n} records",
    )


# --------------------------------------------------------------------------
# 5. sampler correctness
# --------------------------------------------------------------------------

class _StdNormal:
    def __init__(self, dim):
        self.dim = dim

    def logp_and_grad(self, q, want_grad=True):
        return -0.5 * float(q @ q), (-q if want_grad else None)


def test_criterion_5_sampler_correctness():
    cfg = SamplerConfig(n_chains=4, n_warmup=500, n_draws_total=8000, seed=1005)
    draws, diag = sample_posterior(_StdNormal(5), cfg)
    means_ok = True
    for k in range(5):
        x = draws.positions[:, k]
        mcse = x.std() / math.sqrt(ess(x, draws.chain_id))
        means_ok &= abs(x.mean()) < 3 * mcse
    sampler_ok = means_ok and diag.rhat_max < 1.01 and diag.n_divergent == 0

    def max_energy_error(step, n_steps=100):
        q = np.array([1.0, 0.3])
        r = np.array([0.4, -0.8])
        h0 = -0.5 * (q @ q) - 0.5 * (r @ r)
        worst = 0.0
        for _ in range(n_steps):
            q, r = leapfrog(q, r, step, lambda x: -x)
            worst = max(worst, abs((-0.5 * (q @ q) - 0.5 * (r @ r)) - h0))
        return worst

    steps = np.array([0.2, 0.1, 0.05, 0.025])
    errors = np.array([max_energy_error(s) for s in steps])
    slope = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    order_ok = 1.8 <= slope <= 2.2

    worst_rel = 0.0
    for spec in (d1_spec(), d2_spec(), d3_spec()):
        model = ModelSpec(design=spec)
        rng = substream(1005, "grad", spec.design_id)
        data = simulate_dataset(model, draw_parameters(model, rng), rng)
        um = UnconstrainedModel(model, data)
        for _ in range(50):
            q = um.to_unconstrained(draw_parameters(model, rng))
            q += 0.05 * rng.standard_normal(um.dim)
            _, grad = um.logp_and_grad(q)
            fd = np.zeros(um.dim)
            for i in range(um.dim):
                qp = q.copy()
                qp[i] += 1e-5
                qm = q.copy()
                qm[i] -= 1e-5
                fd[i] = (um.logp(qp) - um.logp(qm)) / 2e-5
            worst_rel = max(worst_rel, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    grad_ok = worst_rel < 1e-5

    _report(
        "criterion 5 (sampler correctness)",
        sampler_ok and order_ok and grad_ok,
        f"rhat_max = {diag.rhat_max:.4f}, divergences = {diag.n_divergent}, "
        f"leapfrog order = {slope:.2f}, worst FD gradient error = {worst_rel:.2e}",
    )


# --------------------------------------------------------------------------
# 6. isotonic regression oracle
# --------------------------------------------------------------------------

def test_criterion_6_pav_oracle():
    rng = substream(1006, "crit6")
    worst_mean = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        forecasts = np.round(rng.random(n), 2)
        outcomes = (rng.random(n) < 0.5).astype(float)
        curve = pav_reliability(forecasts, outcomes)
        mine = np.sort(np.repeat(curve.fitted, curve.weights.astype(int)))
        brute = np.sort(_brute_isotonic(forecasts, outcomes))
        if not np.allclose(mine, brute, atol=1e-10):
            _report("criterion 6 (isotonic oracle)", False, "fit differs from brute force")
        weighted = float((curve.fitted * curve.weights).sum() / curve.weights.sum())
        worst_mean = max(worst_mean, abs(weighted - outcomes.mean()))
    _report(
        "criterion 6 (isotonic oracle)",
        worst_mean < 1e-12,
        f"1000 instances match brute force; worst mean-preservation error = {worst_mean:.2e}",
    )


# --------------------------------------------------------------------------
# 7. t-test Bayes factor oracle
# --------------------------------------------------------------------------

def test_criterion_7_jzs_oracle():
    worst = 0.0
    for t in (0.0, 1.0, 2.0, 4.0):
        for n in (20, 100, 1000):
            for scale in (0.2, DEFAULT_SCALE, 1.0):
                mine = math.exp(jzs_paired_log_bf_from_stats(t, n, scale))
                ref = _brute_jzs(t, n, scale)
                worst = max(worst, abs(mine - ref) / ref)
    limit = math.exp(jzs_paired_log_bf_from_stats(1.5, 50, 1e-8))
    limit_ok = 0.999 <= limit <= 1.001
    _report(
        "criterion 7 (t-test Bayes factor oracle)",
        worst < 1e-4 and limit_ok,
        f"max relative error = {worst:.2e} over 36 grid points, "
        f"scale->0 limit = {limit:.6f}",
    )


# --------------------------------------------------------------------------
# 8. distribution suite
# --------------------------------------------------------------------------

def test_criterion_8_distributions():
    from scipy import integrate, stats

    from bfcal import distributions as dist

    rng = substream(1008, "half")
    x = np.array(
        [dist.sample(dist.TruncatedNormalAtZero(0.0, 1.0), rng) for _ in range(100_000)]
    )
    target = math.sqrt(2 / math.pi)
    se = math.sqrt(1 - target**2) / math.sqrt(x.size)
    half_ok = abs(x.mean() - target) < 4 * se

    rng = substream(1008, "lkj")
    r = np.array(
        [(lambda L: (L @ L.T)[1, 0])(dist.sample_lkj_factor(2, 2.0, rng)) for _ in range(100_000)]
    )
    edges = np.linspace(-1, 1, 41)
    norm = integrate.quad(lambda v: 1 - v * v, -1, 1)[0]
    probs = np.array(
        [
            integrate.quad(lambda v: (1 - v * v) / norm, a, b)[0]
            for a, b in zip(edges[:-1], edges[1:])
        ]
    )
    counts, _ = np.histogram(r, bins=edges)
    chi2 = float(((counts - probs * r.size) ** 2 / (probs * r.size)).sum())
    pval = float(stats.chi2.sf(chi2, len(counts) - 1))
    _report(
        "criterion 8 (distribution suite)",
        half_ok and pval > 0.01,
        f"half-normal |mean err| = {abs(x.mean()-target):.2e} (4SE = {4*se:.2e}), "
        f"LKJ GOF p = {pval:.3f}",
    )


# --------------------------------------------------------------------------
# 9. byte-level reproducibility across runs and parallelism
# --------------------------------------------------------------------------

def test_criterion_9_reproducibility(tmp_path):
    config = SbcConfig(
        design=d1_spec(n_subjects=4, n_reps=2),
        effect="meA",
        prior_h1=0.5,
        n_sims=4,
        sampler=SamplerConfig(n_chains=2, n_warmup=150, n_draws_total=400),
        bridge=BridgeConfig(),
        base_seed=1009,
    )
    blobs = []
    for tag, jobs in (("a", 1), ("b", 1), ("c", 2)):
        path = tmp_path / f"records_{tag}.jsonl"
        run_sbc(config, jobs=jobs, out_path=path)
        blobs.append(path.read_bytes())
    identical = blobs[0] == blobs[1] == blobs[2]
    _report(
        "criterion 9 (reproducibility)",
        identical,
        f"three runs (serial x2, two-worker x1) produced "
        f"{'identical' if identical else 'DIFFERING'} records files "
        f"({len(blobs[0])} bytes)",
    )
