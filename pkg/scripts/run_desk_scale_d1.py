#!/usr/bin/env python3
"""Desk-scale replication of the subjects-only 2x2 design.

Runs 100 calibration simulations for each tested effect (meA, meB, int) with
4 chains x 2500 iterations (500 warmup) per fit, then writes the
warning-stratified summaries and figures per effect. Resumable: rerunning
completes only the missing simulations.

Usage:
    python scripts/run_desk_scale_d1.py [--out OUTDIR] [--jobs N]

Expect a few hours of compute; progress streams to stderr.
"""

import argparse
import os
import sys
import time

from bfcal.bridge import BridgeConfig
from bfcal.cli import main as cli_main
from bfcal.designs import d1_spec
from bfcal.sampler import SamplerConfig
from bfcal.sbc import SbcConfig, run_sbc

EFFECTS = (("meA", 20250811), ("meB", 20250812), ("int", 20250813))


def desk_config(effect: str, base_seed: int) -> SbcConfig:
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


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="desk_scale_d1")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()

    for effect, seed in EFFECTS:
        out_dir = os.path.join(args.out, effect)
        os.makedirs(out_dir, exist_ok=True)
        records_path = os.path.join(out_dir, "records.jsonl")
        config = desk_config(effect, seed)
        t0 = time.time()

        def progress(rec):
            flag = "warn" if rec.warning else rec.status
            print(f"{effect} sim {rec.sim_id:3d} [{flag}] t+{time.time()-t0:6.0f}s",
                  file=sys.stderr, flush=True)

        run_sbc(config, jobs=args.jobs, out_path=records_path, resume=True,
                progress=progress)
        code = cli_main([
            "analyze", "--records", records_path,
            "--out", os.path.join(out_dir, "analysis"),
        ])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
