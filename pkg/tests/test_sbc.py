import json
import math

import numpy as np
import pytest

from bfcal.analytic import ConjugateNormalModel
from bfcal.bridge import BridgeConfig, bridge_logml, fit_proposal, posterior_model_prob
from bfcal.designs import d1_spec
from bfcal.rng import substream
from bfcal.sampler import SamplerConfig, sample_posterior
from bfcal.sbc import (
    SbcConfig,
    SbcRunRecord,
    analytic_sbc_records,
    deviations,
    marginal_check,
    partition_by_warning,
    read_records,
    run_one,
    run_sbc,
    write_records,
)

TINY_CONFIG = SbcConfig(
    design=d1_spec(n_subjects=4, n_reps=2),
    effect="meA",
    prior_h1=0.5,
    n_sims=2,
    sampler=SamplerConfig(n_chains=2, n_warmup=100, n_draws_total=300, seed=0),
    bridge=BridgeConfig(),
    base_seed=424242,
)


def _fake_record(sim_id, posterior_h1, true_model, warning=False, status="ok"):
    return SbcRunRecord(
        sim_id=sim_id,
        status=status,
        true_model=true_model,
        logml_h0=-10.0,
        logml_h1=-9.0,
        log_bf10=1.0,
        posterior_h1=posterior_h1,
        warning=warning,
    )


class TestRunOne:
    def test_bit_identical_records(self):
        r1 = run_one(0, TINY_CONFIG)
        r2 = run_one(0, TINY_CONFIG)
        assert r1.to_json() == r2.to_json()
        assert r1.status == "ok"
        assert r1.posterior_h1 is not None

    def test_schema_round_trip(self):
        rec = run_one(1, TINY_CONFIG)
        parsed = SbcRunRecord.from_json(rec.to_json())
        assert parsed.sim_id == rec.sim_id
        assert parsed.logml_h0 == rec.logml_h0
        assert parsed.logml_h1 == rec.logml_h1
        assert parsed.warning == rec.warning
        payload = json.loads(rec.to_json())
        for key in ("sim_id", "true_model", "logml_h0", "logml_h1", "log_bf10",
                    "posterior_h1", "warning", "rhat_max", "seed_trail"):
            assert key in payload


class TestToyPipelineAgainstClosedForm:
    def test_posterior_prob_matches_conjugate_solution(self):
        # full sampler + bridge pipeline on the conjugate location model; the
        # null has no free parameters, so its evidence is exact
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
        rng = substream(77, "toy")
        y = model.simulate("H1", rng)

        class Target:
            dim = 1
            sum_y = y.sum()
            n = y.shape[0]

            def logp_and_grad(self, q, want_grad=True):
                lp = model.log_joint_h1(y)(q[None, :])[0]
                if not want_grad:
                    return lp, None
                grad = (self.sum_y - self.n * q) / model.sigma**2 - q / model.tau**2
                return lp, grad

        draws, _ = sample_posterior(
            Target(), SamplerConfig(n_chains=4, n_warmup=300, n_draws_total=8000, seed=5)
        )
        res = bridge_logml(
            model.log_joint_h1(y), draws, fit_proposal(draws), rng=substream(77, "b")
        )
        log_bf10 = res.logml - model.logml_h0(y)
        estimate = posterior_model_prob(log_bf10, 0.5)
        exact = posterior_model_prob(model.log_bf10(y), 0.5)
        assert abs(estimate - exact) < 0.02


class TestRunSbc:
    def test_resume_regenerates_missing_ids(self, tmp_path):
        path = tmp_path / "records.jsonl"
        records = run_sbc(TINY_CONFIG, out_path=path)
        assert len(records) == TINY_CONFIG.n_sims
        full = path.read_bytes()

        # drop the second record, resume, expect byte-identical content
        kept = [rec for rec in read_records(path) if rec.sim_id == 0]
        write_records(path, kept)
        run_sbc(TINY_CONFIG, out_path=path, resume=True)
        assert path.read_bytes() == full

    def test_parallel_matches_serial(self, tmp_path):
        p1 = tmp_path / "serial.jsonl"
        p2 = tmp_path / "parallel.jsonl"
        run_sbc(TINY_CONFIG, jobs=1, out_path=p1)
        run_sbc(TINY_CONFIG, jobs=2, out_path=p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestPartition:
    def test_all_clean(self):
        records = [_fake_record(i, 0.5, "H0") for i in range(5)]
        clean, warned = partition_by_warning(records)
        assert len(clean) == 5 and warned == []

    def test_mixed_flags_partition(self):
        records = [_fake_record(i, 0.5, "H0", warning=i % 3 == 0) for i in range(10)]
        clean, warned = partition_by_warning(records)
        assert len(clean) + len(warned) == 10
        assert all(not r.warning for r in clean)
        assert all(r.warning for r in warned)

    def test_each_stratum_remains_valid_population(self):
        # a data-dependent flag must leave the calibration identity intact in
        # both strata; flag simulations by a statistic of their own data
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
        base_seed = 2024
        records = analytic_sbc_records(model, prior_h1=0.2, n_sims=2000, base_seed=base_seed)
        flagged = []
        for rec in records:
            y = model.simulate(
                rec.true_model, substream(base_seed, rec.sim_id, "data")
            )
            rec.warning = bool(y.mean() > 0)
            flagged.append(rec)
        clean, warned = partition_by_warning(flagged)
        assert len(clean) > 100 and len(warned) > 100
        for stratum in (clean, warned):
            s = marginal_check(stratum, 0.2)
            assert abs(s.mean_deviation) < 3 * s.se


class TestMarginalCheck:
    def test_perfect_forecasts_zero_deviation(self):
        records = [
            _fake_record(i, 1.0 if i % 2 else 0.0, "H1" if i % 2 else "H0")
            for i in range(10)
        ]
        s = marginal_check(records, 0.5)
        assert s.mean_deviation == 0.0

    def test_calibrated_records_within_3se(self):
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
        records = analytic_sbc_records(model, prior_h1=0.2, n_sims=1000, base_seed=20250801)
        s = marginal_check(records, 0.2)
        assert abs(s.mean_deviation) < 3 * s.se

    def test_constant_forecast_arithmetic(self):
        rng = substream(1, "const")
        records = [
            _fake_record(i, 1.0, "H1" if rng.random() < 0.2 else "H0")
            for i in range(500)
        ]
        s = marginal_check(records, 0.2)
        frac_h1 = sum(r.true_model == "H1" for r in records) / 500
        assert s.mean_deviation == pytest.approx(1.0 - frac_h1, abs=1e-12)
        assert s.ci_low > 0  # the interval must exclude zero

    def test_error_records_excluded_and_counted(self):
        records = [_fake_record(i, 0.5, "H0") for i in range(4)]
        records.append(_fake_record(4, None, "H0", status="error"))
        s = marginal_check(records, 0.5)
        assert s.n == 4 and s.n_error == 1

    def test_needs_two_records(self):
        with pytest.raises(ValueError):
            marginal_check([_fake_record(0, 0.5, "H0")], 0.5)


class TestAntisymmetry:
    def test_swapping_hypothesis_labels_flips_everything(self):
        # relabeling H0 <-> H1 negates log BF and complements the posterior
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
        records = analytic_sbc_records(model, prior_h1=0.3, n_sims=50, base_seed=9)
        for rec in records:
            flipped_log_bf = rec.logml_h0 - rec.logml_h1
            p_flipped = posterior_model_prob(flipped_log_bf, 1.0 - 0.3)
            assert p_flipped == pytest.approx(1.0 - rec.posterior_h1, abs=1e-12)
