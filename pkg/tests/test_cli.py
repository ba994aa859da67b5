import json
import math
import os

import numpy as np
import pytest

from bfcal.analytic import ConjugateNormalModel
from bfcal.cli import main
from bfcal.config import ConfigError, config_hash, load_config
from bfcal.sbc import analytic_sbc_records, write_records
from bfcal.validate import check_conjugate_bridge, run_validation

TINY_TOML = """
[design]
id = "D1"
n_subjects = 4
n_reps = 2

[sbc]
effect = "meA"
prior_h1 = 0.5
n_sims = 2
base_seed = 99

[sampler]
n_chains = 2
n_warmup = 100
n_draws_total = 300

[bridge]
method = "warp3"
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(TINY_TOML)
    return path


class TestConfig:
    def test_load_and_defaults(self, tiny_config):
        config = load_config(tiny_config)
        assert config.design.design_id == "D1"
        assert config.sampler.n_chains == 2
        assert config.bridge.method == "warp3"
        assert "sigma_u" in config.priors

    def test_prior_override(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(
            TINY_TOML + '\n[priors]\nintercept = { family = "normal", mean = 0.5, sd = 0.2 }\n'
        )
        config = load_config(path)
        assert config.priors["intercept"].mean == 0.5

    def test_hash_changes_with_meaningful_fields_only(self, tmp_path, tiny_config):
        base = config_hash(load_config(tiny_config))
        other = tmp_path / "c2.toml"
        other.write_text(TINY_TOML.replace("base_seed = 99", "base_seed = 100"))
        assert config_hash(load_config(other)) != base
        same = tmp_path / "c3.toml"
        same.write_text(TINY_TOML + "\n# a comment\n")
        assert config_hash(load_config(same)) == base

    def test_parse_errors(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[design]\nid = 'D9'\n[sbc]\neffect='meA'\nprior_h1=0.5\nn_sims=1")
        with pytest.raises(ConfigError):
            load_config(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.toml")


class TestRunCommand:
    def test_run_writes_one_line_per_sim(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_config), "--out", str(out)]) == 0
        lines = (out / "records.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config_hash"] == config_hash(load_config(tiny_config))

    def test_rerun_is_byte_identical(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(tiny_config), "--out", str(out1)])
        main(["run", "--config", str(tiny_config), "--out", str(out2)])
        assert (out1 / "records.jsonl").read_bytes() == (out2 / "records.jsonl").read_bytes()

    def test_resume_with_wrong_config_exits_3(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config), "--out", str(out)])
        changed = tmp_path / "changed.toml"
        changed.write_text(TINY_TOML.replace("base_seed = 99", "base_seed = 7"))
        code = main(["run", "--config", str(changed), "--out", str(out), "--resume"])
        assert code == 3

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("not toml [")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_seed_override_changes_hash(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config), "--out", str(out), "--seed", "123"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["base_seed"] == 123

    def test_dump_draws_flag(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config), "--out", str(out), "--dump-draws"])
        files = sorted(os.listdir(out / "draws"))
        assert files == [
            "draws_00000_h0.csv", "draws_00000_h1.csv",
            "draws_00001_h0.csv", "draws_00001_h1.csv",
        ]
        header = (out / "draws" / files[0]).read_text().splitlines()[0]
        assert header.startswith("chain,energy,divergent,treedepth,q0")


class TestAnalyzeCommand:
    @pytest.fixture
    def calibrated_records(self, tmp_path):
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
        records = analytic_sbc_records(model, prior_h1=0.2, n_sims=1000, base_seed=20250801)
        path = tmp_path / "records.jsonl"
        write_records(path, records)
        return path

    def test_outputs_and_clean_ci_contains_zero(self, calibrated_records, tmp_path):
        out = tmp_path / "analysis"
        assert main(["analyze", "--records", str(calibrated_records), "--out", str(out)]) == 0
        for name in ("summary.csv", "sensitivity.csv", "deviation.svg",
                     "sensitivity.svg", "evidence.csv", "evidence.svg",
                     "reliability_clean.csv", "reliability_clean.svg"):
            assert (out / name).exists(), name
        # every record is clean, so no warned outputs
        assert not (out / "reliability_warned.csv").exists()
        rows = (out / "summary.csv").read_text().strip().splitlines()
        clean_row = [r for r in rows if r.startswith("clean,")][0]
        _, _, _, _, ci_low, ci_high = clean_row.split(",")
        assert float(ci_low) < 0 < float(ci_high)

    def test_analyze_idempotent(self, calibrated_records, tmp_path):
        out = tmp_path / "analysis"
        main(["analyze", "--records", str(calibrated_records), "--out", str(out)])
        first = {
            name: (out / name).read_bytes()
            for name in os.listdir(out)
        }
        main(["analyze", "--records", str(calibrated_records), "--out", str(out)])
        for name, blob in first.items():
            assert (out / name).read_bytes() == blob, name


class TestSimulateCommand:
    def test_writes_csv_per_simulation(self, tiny_config, tmp_path):
        out = tmp_path / "sims"
        assert main(["simulate", "--config", str(tiny_config), "--out", str(out), "--n", "3"]) == 0
        files = sorted(os.listdir(out))
        assert files == ["sim_00000.csv", "sim_00001.csv", "sim_00002.csv"]
        header = (out / files[0]).read_text().splitlines()[0]
        assert header.startswith("subject,block") or header.startswith("subject,")
        assert header.endswith(",y")


class TestValidateCommand:
    def test_fast_validation_passes(self, capsys):
        assert run_validation(fast=True) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_full_validation_passes_within_budget(self, capsys):
        import time

        t0 = time.perf_counter()
        assert run_validation(fast=False) == 0
        elapsed = time.perf_counter() - t0
        assert elapsed < 600  # soft threshold: well under ten minutes
        assert "FAIL" not in capsys.readouterr().out

    def test_injected_offset_fails_conjugate_check(self):
        ok, _ = check_conjugate_bridge(fast=True, logml_offset=0.1)
        assert not ok
