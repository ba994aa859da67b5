"""Generative side of the calibration loop.

One simulation = sample which hypothesis is true, draw its parameters from
the priors, simulate one dataset. Each stage consumes its own random
sub-stream so that changing one stage never perturbs another's randomness.
"""

from __future__ import annotations

import csv

import numpy as np

from .designs import build_design
from .models import Dataset, ModelSpec, ParameterSet, draw_from_prior, linear_predictor

H0 = "H0"
H1 = "H1"


def sample_true_model(prior_h1: float, rng: np.random.Generator) -> str:
    """Bernoulli(prior_h1) draw of the data-generating hypothesis."""
    if not 0.0 <= prior_h1 <= 1.0:
        raise ValueError(f"prior_h1 must be in [0, 1], got {prior_h1}")
    return H1 if rng.random() < prior_h1 else H0


def draw_parameters(model: ModelSpec, rng: np.random.Generator) -> ParameterSet:
    """Draw every model parameter from its prior; a pinned effect stays at 0."""
    return draw_from_prior(model, rng)


def simulate_dataset(model: ModelSpec, params: ParameterSet, rng: np.random.Generator) -> Dataset:
    """Simulate one dataset: y ~ Normal(mu, sigma) or LogNormal(mu, sigma)."""
    table = build_design(model.design)
    mu = linear_predictor(params, table, model)
    noise = rng.standard_normal(mu.size) if params.sigma_resid > 0 else 0.0
    latent = mu + params.sigma_resid * noise
    y = np.exp(latent) if model.design.likelihood == "lognormal" else latent
    return Dataset(table=table, y=y)


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Dump one simulated dataset for external inspection."""
    table = dataset.table
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["subject"]
        if table.item is not None:
            header.append("item")
        if table.block is not None:
            header.append("block")
        header += [f"code_{label}" for label in table.labels[1:]] + ["y"]
        writer.writerow(header)
        for n in range(table.n_rows):
            row = [int(table.subject[n])]
            if table.item is not None:
                row.append(int(table.item[n]))
            if table.block is not None:
                row.append(int(table.block[n]))
            row += [int(c) for c in table.X[n, 1:]]
            row.append(repr(float(dataset.y[n])))
            writer.writerow(row)
