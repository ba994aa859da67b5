"""End-to-end calibration harness.

Each simulation samples the true hypothesis from the model prior, draws its
parameters, simulates a dataset, fits both hypotheses with the gradient
sampler, estimates both marginal likelihoods by bridge sampling, and records
the Bayes factor and posterior model probability together with all warning
flags and diagnostics. Every stage draws from its own (base_seed, sim_id,
stage) stream, so records are bit-identical however the batch is scheduled.

If the Bayes factor pipeline is exact, the posterior model probability
averaged over simulations equals the prior model probability; the deviation
summary quantifies departures from that identity. Because the bridge warning
flag is a function of the simulated data alone, the identity also holds
within each warning stratum, which is what makes the warning-partitioned
analysis valid.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rng_mod
from .analytic import ConjugateNormalModel
from .bridge import (
    BridgeConfig,
    BridgeEstimationError,
    bridge_logml,
    fit_proposal,
    posterior_model_prob,
)
from .designs import DesignSpec
from .models import ModelSpec, UnconstrainedModel
from .sampler import SamplerConfig, SamplerFailure, sample_posterior
from .simulate import H1, draw_parameters, sample_true_model, simulate_dataset

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SbcConfig:
    design: DesignSpec
    effect: str
    prior_h1: float
    n_sims: int
    sampler: SamplerConfig = SamplerConfig()
    bridge: BridgeConfig = BridgeConfig()
    base_seed: int = 0
    priors: dict | None = None

    def __post_init__(self):
        if self.n_sims < 1:
            raise ValueError("n_sims must be >= 1")
        if not 0.0 <= self.prior_h1 <= 1.0:
            raise ValueError("prior_h1 must be in [0, 1]")
        # instantiating the models validates the effect label and priors
        self.model_h0  # noqa: B018

    @property
    def model_h1(self) -> ModelSpec:
        return ModelSpec(design=self.design, zeroed_effect=None, priors=self.priors)

    @property
    def model_h0(self) -> ModelSpec:
        return ModelSpec(design=self.design, zeroed_effect=self.effect, priors=self.priors)


@dataclass
class SbcRunRecord:
    sim_id: int
    status: str
    true_model: str
    logml_h0: float | None = None
    logml_h1: float | None = None
    log_bf10: float | None = None
    posterior_h1: float | None = None
    warning: bool = False
    warning_h0: bool = False
    warning_h1: bool = False
    rhat_max: float | None = None
    n_divergent: int = 0
    max_treedepth_hits: int = 0
    relative_error_h0: float | None = None
    relative_error_h1: float | None = None
    bridge_iterations_h0: int = 0
    bridge_iterations_h1: int = 0
    seed_trail: list = field(default_factory=list)
    error: str | None = None
    schema_version: int = SCHEMA_VERSION
    # volatile timing lives on the object but is never serialized into the
    # records file, which must be byte-reproducible
    wall_time: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "sim_id": self.sim_id,
            "status": self.status,
            "true_model": self.true_model,
            "logml_h0": _json_float(self.logml_h0),
            "logml_h1": _json_float(self.logml_h1),
            "log_bf10": _json_float(self.log_bf10),
            "posterior_h1": _json_float(self.posterior_h1),
            "warning": self.warning,
            "warning_h0": self.warning_h0,
            "warning_h1": self.warning_h1,
            "rhat_max": _json_float(self.rhat_max),
            "n_divergent": self.n_divergent,
            "max_treedepth_hits": self.max_treedepth_hits,
            "relative_error_h0": _json_float(self.relative_error_h0),
            "relative_error_h1": _json_float(self.relative_error_h1),
            "bridge_iterations_h0": self.bridge_iterations_h0,
            "bridge_iterations_h1": self.bridge_iterations_h1,
            "seed_trail": self.seed_trail,
            "error": self.error,
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SbcRunRecord":
        raw = json.loads(line)
        raw.pop("schema_version", None)
        return cls(schema_version=SCHEMA_VERSION, **raw)


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return 1e308 if x > 0 else -1e308
    return x


@dataclass
class SbcSummary:
    n: int
    mean_deviation: float
    se: float
    ci_low: float
    ci_high: float
    n_clean: int
    n_warned: int
    n_error: int


def _fit_and_bridge(model, dataset, config: SbcConfig, sim_id: int, tag: str, dump_dir=None):
    target = UnconstrainedModel(model, dataset)
    fit_seed = rng_mod.derive_seed(config.base_seed, sim_id, "mcmc", tag)
    t0 = time.perf_counter()
    draws, diag = sample_posterior(target, replace(config.sampler, seed=fit_seed))
    t_fit = time.perf_counter() - t0
    if dump_dir is not None:
        from .sampler import write_draws_csv

        write_draws_csv(draws, os.path.join(dump_dir, f"draws_{sim_id:05d}_{tag}.csv"))
    t0 = time.perf_counter()
    proposal = fit_proposal(draws)
    bres = bridge_logml(
        target.logp_batch,
        draws,
        proposal,
        maxiter=config.bridge.maxiter,
        tol=config.bridge.tol,
        rng=rng_mod.substream(config.base_seed, sim_id, "bridge", tag),
        method=config.bridge.method,
    )
    t_bridge = time.perf_counter() - t0
    return draws, diag, bres, t_fit, t_bridge


def run_one(sim_id: int, config: SbcConfig, dump_dir=None) -> SbcRunRecord:
    """Run one complete simulation; deterministic in (base_seed, sim_id)."""
    trail = [f"({config.base_seed},{sim_id},{stage})" for stage in ("model", "params", "noise", "mcmc", "bridge")]
    true_model = sample_true_model(
        config.prior_h1, rng_mod.substream(config.base_seed, sim_id, "model")
    )
    gen_model = config.model_h1 if true_model == H1 else config.model_h0
    params = draw_parameters(gen_model, rng_mod.substream(config.base_seed, sim_id, "params"))
    t0 = time.perf_counter()
    dataset = simulate_dataset(
        gen_model, params, rng_mod.substream(config.base_seed, sim_id, "noise")
    )
    t_sim = time.perf_counter() - t0

    record = SbcRunRecord(sim_id=sim_id, status="ok", true_model=true_model, seed_trail=trail)
    record.wall_time["simulate"] = t_sim
    try:
        results = {}
        for tag, model in (("h0", config.model_h0), ("h1", config.model_h1)):
            draws, diag, bres, t_fit, t_bridge = _fit_and_bridge(
                model, dataset, config, sim_id, tag, dump_dir=dump_dir
            )
            results[tag] = (diag, bres)
            record.wall_time[f"fit_{tag}"] = t_fit
            record.wall_time[f"bridge_{tag}"] = t_bridge
    except (SamplerFailure, BridgeEstimationError) as exc:
        record.status = "error"
        record.error = f"{type(exc).__name__}: {exc}"
        return record

    diag0, bres0 = results["h0"]
    diag1, bres1 = results["h1"]
    if not (math.isfinite(bres0.logml) and math.isfinite(bres1.logml)):
        record.status = "error"
        record.error = "bridge returned a non-finite log marginal likelihood"
        return record

    record.logml_h0 = bres0.logml
    record.logml_h1 = bres1.logml
    record.log_bf10 = bres1.logml - bres0.logml
    record.posterior_h1 = posterior_model_prob(record.log_bf10, config.prior_h1)
    record.warning_h0 = bres0.warning
    record.warning_h1 = bres1.warning
    record.warning = bres0.warning or bres1.warning
    rhats = [r for r in (diag0.rhat_max, diag1.rhat_max) if math.isfinite(r)]
    record.rhat_max = max(rhats) if rhats else None
    record.n_divergent = diag0.n_divergent + diag1.n_divergent
    record.max_treedepth_hits = diag0.max_treedepth_hits + diag1.max_treedepth_hits
    record.relative_error_h0 = bres0.relative_error_estimate
    record.relative_error_h1 = bres1.relative_error_estimate
    record.bridge_iterations_h0 = bres0.n_iterations
    record.bridge_iterations_h1 = bres1.n_iterations
    return record


def _run_one_star(args):
    return run_one(*args)


def run_sbc(
    config: SbcConfig,
    jobs: int = 1,
    out_path=None,
    resume: bool = False,
    progress=None,
    dump_dir=None,
) -> list[SbcRunRecord]:
    """Run the whole batch; with ``out_path`` records stream to a JSONL file.

    On resume, sim_ids already present in the file are kept as-is and only the
    missing ones are computed. The final file is rewritten sorted by sim_id,
    so its bytes do not depend on scheduling or the number of workers.
    """
    done: dict[int, SbcRunRecord] = {}
    if out_path is not None and resume and os.path.exists(out_path):
        for rec in read_records(out_path):
            done[rec.sim_id] = rec
    todo = [i for i in range(config.n_sims) if i not in done]

    def note(rec):
        if progress is not None:
            progress(rec)

    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)
    new_records = []
    if jobs <= 1:
        for sim_id in todo:
            rec = run_one(sim_id, config, dump_dir)
            new_records.append(rec)
            note(rec)
            if out_path is not None:
                _append_record(out_path, rec)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(
                _run_one_star, [(i, config, dump_dir) for i in todo], chunksize=1
            ):
                new_records.append(rec)
                note(rec)
                if out_path is not None:
                    _append_record(out_path, rec)

    records = sorted(
        list(done.values()) + new_records, key=lambda r: r.sim_id
    )
    if out_path is not None:
        write_records(out_path, records)
    return records


def _append_record(path, record: SbcRunRecord) -> None:
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")


def write_records(path, records) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for rec in sorted(records, key=lambda r: r.sim_id):
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, path)


def read_records(path) -> list[SbcRunRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SbcRunRecord.from_json(line))
    # keep the last occurrence when a resume appended duplicates
    by_id = {rec.sim_id: rec for rec in records}
    return [by_id[k] for k in sorted(by_id)]


def partition_by_warning(records) -> tuple[list[SbcRunRecord], list[SbcRunRecord]]:
    """Disjoint exhaustive split of the records on the warning flag."""
    clean = [r for r in records if not r.warning]
    warned = [r for r in records if r.warning]
    return clean, warned


def deviations(records) -> np.ndarray:
    """Per-record deviation posterior_h1 - 1[true model is H1] (ok records)."""
    ok = [r for r in records if r.status == "ok"]
    return np.array([r.posterior_h1 - (1.0 if r.true_model == H1 else 0.0) for r in ok])


def marginal_check(records, prior_h1: float) -> SbcSummary:
    """Mean deviation of posterior from prior with a normal-theory 95% CI."""
    ok = [r for r in records if r.status == "ok"]
    if len(ok) < 2:
        raise ValueError("marginal_check needs at least 2 usable records")
    d = deviations(ok)
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    clean, warned = partition_by_warning(ok)
    return SbcSummary(
        n=d.size,
        mean_deviation=mean,
        se=se,
        ci_low=mean - 1.96 * se,
        ci_high=mean + 1.96 * se,
        n_clean=len(clean),
        n_warned=len(warned),
        n_error=len(records) - len(ok),
    )


def analytic_sbc_records(
    model: ConjugateNormalModel, prior_h1: float, n_sims: int, base_seed: int
) -> list[SbcRunRecord]:
    """Calibration records for the conjugate model with exact evidence.

    Exercises the full record pipeline without MCMC or bridge error; the
    per-record flag is unused (no bridge), so warning stays False.
    """
    records = []
    for sim_id in range(n_sims):
        true_model = sample_true_model(
            prior_h1, rng_mod.substream(base_seed, sim_id, "model")
        )
        y = model.simulate(true_model, rng_mod.substream(base_seed, sim_id, "data"))
        logml_h0 = model.logml_h0(y)
        logml_h1 = model.logml_h1(y)
        log_bf10 = logml_h1 - logml_h0
        records.append(
            SbcRunRecord(
                sim_id=sim_id,
                status="ok",
                true_model=true_model,
                logml_h0=logml_h0,
                logml_h1=logml_h1,
                log_bf10=log_bf10,
                posterior_h1=posterior_model_prob(log_bf10, prior_h1),
                seed_trail=[f"({base_seed},{sim_id},analytic)"],
            )
        )
    return records
