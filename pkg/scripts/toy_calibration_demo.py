#!/usr/bin/env python3
"""Quick end-to-end demo on the conjugate location model.

Generates 1000 calibration records with closed-form evidence (no MCMC, no
bridge error), writes them as JSONL, and runs the full analysis on them.
Finishes in well under a minute; a calibrated pipeline shows a deviation
interval covering zero and strong evidence for the null at the default
prior scale.
"""

import argparse
import sys

from bfcal.analytic import ConjugateNormalModel
from bfcal.cli import main as cli_main
from bfcal.sbc import analytic_sbc_records, write_records


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="toy_demo")
    parser.add_argument("--n-sims", type=int, default=1000)
    parser.add_argument("--prior-h1", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=20250801)
    args = parser.parse_args()

    import os

    os.makedirs(args.out, exist_ok=True)
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=1)
    records = analytic_sbc_records(
        model, prior_h1=args.prior_h1, n_sims=args.n_sims, base_seed=args.seed
    )
    records_path = os.path.join(args.out, "records.jsonl")
    write_records(records_path, records)
    return cli_main([
        "analyze", "--records", records_path, "--out", os.path.join(args.out, "analysis"),
    ])


if __name__ == "__main__":
    sys.exit(main())
