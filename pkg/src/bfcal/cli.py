"""Command line interface: run batches, analyze records, validate numerics.

Exit codes for ``run``: 0 on success (including batches with per-run error
records, which are reported in the counts), 2 for an unreadable or invalid
config, 3 when resuming against an output directory produced by a different
config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_SCALE,
    DegenerateDataError,
    consistency_bands,
    default_scale_grid,
    evidence_vs_n,
    jzs_paired_log_bf,
    pav_reliability,
)
from .config import ConfigError, config_hash, config_to_dict, load_config
from .figures import (
    deviation_figure,
    evidence_figure,
    reliability_figure,
    sensitivity_figure,
)
from .rng import substream
from .sbc import (
    H1,
    deviations,
    marginal_check,
    partition_by_warning,
    read_records,
    run_sbc,
)
from .simulate import draw_parameters, sample_true_model, simulate_dataset, write_dataset_csv


def _default_jobs(flag_value) -> int:
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get("BFCAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, base_seed=int(args.seed))
    jobs = _default_jobs(args.jobs)
    os.makedirs(args.out, exist_ok=True)
    records_path = os.path.join(args.out, "records.jsonl")
    manifest_path = os.path.join(args.out, "manifest.json")
    digest = config_hash(config)

    if args.resume and os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("config_hash") != digest:
            print("error: config hash mismatch with existing manifest", file=sys.stderr)
            return 3
    if not args.resume and os.path.exists(records_path):
        os.remove(records_path)

    manifest = {
        "package": "bfcal",
        "version": __version__,
        "config_hash": digest,
        "n_sims": config.n_sims,
        "config": config_to_dict(config),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    t0 = time.perf_counter()
    timings = []

    def progress(rec):
        timings.append({"sim_id": rec.sim_id, "wall_time": rec.wall_time})
        status = rec.status if rec.status != "ok" else ("warn" if rec.warning else "ok")
        print(f"sim {rec.sim_id:5d} [{status}]", file=sys.stderr)

    dump_dir = os.path.join(args.out, "draws") if args.dump_draws else None
    records = run_sbc(
        config, jobs=jobs, out_path=records_path, resume=args.resume,
        progress=progress, dump_dir=dump_dir,
    )
    with open(os.path.join(args.out, "timings.jsonl"), "a") as fh:
        for entry in timings:
            fh.write(json.dumps(entry) + "\n")

    n_error = sum(1 for r in records if r.status != "ok")
    n_warned = sum(1 for r in records if r.status == "ok" and r.warning)
    print(
        f"{len(records)} records ({n_warned} with warnings, {n_error} errors) "
        f"in {time.perf_counter() - t0:.1f}s -> {records_path}"
    )
    return 0


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _summary_row(name, records, prior_h1):
    s = marginal_check(records, prior_h1)
    return [name, s.n, repr(s.mean_deviation), repr(s.se), repr(s.ci_low), repr(s.ci_high)]


def cmd_analyze(args) -> int:
    records = [r for r in read_records(args.records) if r.status == "ok"]
    if len(records) < 2:
        print("error: need at least 2 usable records", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    prior_h1 = args.prior_h1
    clean, warned = partition_by_warning(records)
    strata = {"all": records, "clean": clean, "warned": warned}
    usable = {k: v for k, v in strata.items() if len(v) >= 2}
    for name in strata:
        if name not in usable:
            print(f"note: stratum {name!r} has fewer than 2 records; outputs omitted",
                  file=sys.stderr)

    summaries = {k: marginal_check(v, prior_h1) for k, v in usable.items()}
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["stratum", "n", "mean_deviation", "se", "ci_low", "ci_high"],
        [_summary_row(k, v, prior_h1) for k, v in usable.items()],
    )
    with open(os.path.join(args.out, "deviation.svg"), "w") as fh:
        fh.write(deviation_figure(summaries))

    scales = default_scale_grid()
    sens_rows, sens_curves = [], {}
    for name, recs in usable.items():
        d = deviations(recs)
        if d.std(ddof=1) == 0:
            continue
        log_curve = [(float(s), jzs_paired_log_bf(d, float(s))) for s in scales]
        sens_curves[name] = [(s, math.exp(min(-lb, 709.0))) for s, lb in log_curve]
        for s, log_bf10 in log_curve:
            sens_rows.append(
                [name, repr(s), int(s == DEFAULT_SCALE), repr(log_bf10),
                 repr(math.exp(min(log_bf10, 709.0))), repr(math.exp(min(-log_bf10, 709.0)))]
            )
    _write_csv(
        os.path.join(args.out, "sensitivity.csv"),
        ["stratum", "scale", "is_default", "log_bf10", "bf10", "bf01"],
        sens_rows,
    )
    with open(os.path.join(args.out, "sensitivity.svg"), "w") as fh:
        fh.write(sensitivity_figure(sens_curves, DEFAULT_SCALE))

    for name in ("clean", "warned"):
        if name not in usable:
            continue
        recs = usable[name]
        forecasts = np.array([r.posterior_h1 for r in recs])
        outcomes = np.array([1.0 if r.true_model == H1 else 0.0 for r in recs])
        curve = pav_reliability(forecasts, outcomes)
        lower, upper = consistency_bands(
            forecasts, level=0.95, n_resample=1000, rng=substream(20250801, "bands", name)
        )
        curve.band_lower, curve.band_upper = lower, upper
        _write_csv(
            os.path.join(args.out, f"reliability_{name}.csv"),
            ["forecast", "fitted", "weight", "band_lower", "band_upper"],
            [
                [repr(f), repr(v), repr(w), repr(lo), repr(hi)]
                for f, v, w, lo, hi in zip(
                    curve.forecasts, curve.fitted, curve.weights, lower, upper
                )
            ],
        )
        with open(os.path.join(args.out, f"reliability_{name}.svg"), "w") as fh:
            fh.write(reliability_figure(curve, f"Reliability ({name} stratum, n={curve.n})"))

    evid_rows, evid_curves = [], {}
    for name, recs in usable.items():
        try:
            curve = evidence_vs_n(recs, scale=DEFAULT_SCALE, stride=args.stride)
        except (ValueError, DegenerateDataError):
            continue
        evid_curves[name] = curve
        for n, bf01 in curve:
            evid_rows.append([name, n, "" if bf01 is None else repr(bf01)])
    _write_csv(os.path.join(args.out, "evidence.csv"), ["stratum", "n", "bf01"], evid_rows)
    with open(os.path.join(args.out, "evidence.svg"), "w") as fh:
        fh.write(evidence_figure(evid_curves))

    for name, s in summaries.items():
        print(
            f"{name:7s} n={s.n:5d} mean_dev={s.mean_deviation:+.4f} "
            f"ci=({s.ci_low:+.4f}, {s.ci_high:+.4f})"
        )
    return 0


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    n = args.n if args.n is not None else min(config.n_sims, 10)
    for sim_id in range(n):
        true_model = sample_true_model(
            config.prior_h1, substream(config.base_seed, sim_id, "model")
        )
        model = config.model_h1 if true_model == H1 else config.model_h0
        params = draw_parameters(model, substream(config.base_seed, sim_id, "params"))
        dataset = simulate_dataset(model, params, substream(config.base_seed, sim_id, "noise"))
        write_dataset_csv(dataset, os.path.join(args.out, f"sim_{sim_id:05d}.csv"))
    print(f"wrote {n} simulated datasets to {args.out}")
    return 0


def cmd_validate(args) -> int:
    from .validate import run_validation

    return run_validation(fast=args.fast)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bfcal",
        description="Calibration checks for bridge-sampled Bayes factors in mixed models",
    )
    parser.add_argument("--version", action="version", version=f"bfcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a calibration batch from a TOML config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: BFCAL_THREADS or 1)")
    p_run.add_argument("--resume", action="store_true",
                       help="keep existing records, compute only missing sim ids")
    p_run.add_argument("--seed", type=int, default=None, help="override the base seed")
    p_run.add_argument("--dump-draws", action="store_true", dest="dump_draws",
                       help="write posterior draws per fit as CSV under OUT/draws")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="summaries, sensitivity, reliability, figures")
    p_an.add_argument("--records", required=True)
    p_an.add_argument("--out", required=True)
    p_an.add_argument("--prior-h1", type=float, default=None, dest="prior_h1",
                      help="prior probability of the alternative (informational)")
    p_an.add_argument("--stride", type=int, default=10,
                      help="prefix stride for the evidence-vs-n curve")
    p_an.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="dump simulated datasets as CSV")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_val = sub.add_parser("validate", help="run the analytic-oracle check suite")
    p_val.add_argument("--fast", action="store_true", help="smaller draw counts")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
