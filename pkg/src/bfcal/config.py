"""TOML batch configuration: parsing, defaults, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .bridge import BridgeConfig
from .designs import DesignSpec, d1_spec, d2_spec, d3_spec
from .distributions import LKJ, Cauchy, Normal, TruncatedNormalAtZero
from .models import default_priors
from .sampler import SamplerConfig
from .sbc import SbcConfig


class ConfigError(ValueError):
    """Unusable batch configuration file."""


_DESIGN_BUILDERS = {"D1": d1_spec, "D2": d2_spec, "D3": d3_spec}


def _parse_design(section: dict) -> DesignSpec:
    design_id = section.get("id")
    if design_id not in _DESIGN_BUILDERS:
        raise ConfigError(f"[design] id must be one of D1, D2, D3, got {design_id!r}")
    kwargs = {}
    if "n_subjects" in section:
        kwargs["n_subjects"] = int(section["n_subjects"])
    if design_id == "D1" and "n_reps" in section:
        kwargs["n_reps"] = int(section["n_reps"])
    if design_id in ("D2", "D3") and "n_items" in section:
        kwargs["n_items"] = int(section["n_items"])
    try:
        return _DESIGN_BUILDERS[design_id](**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_prior(label: str, spec: dict):
    family = spec.get("family")
    try:
        if family == "normal":
            return Normal(float(spec["mean"]), float(spec["sd"]))
        if family in ("half_normal", "truncated_normal"):
            return TruncatedNormalAtZero(float(spec.get("mean", 0.0)), float(spec["sd"]))
        if family == "cauchy":
            return Cauchy(float(spec.get("location", 0.0)), float(spec["scale"]))
        if family == "lkj":
            return LKJ(float(spec["eta"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad prior for {label!r}: {exc}") from exc
    raise ConfigError(f"unknown prior family {family!r} for {label!r}")


def load_config(path) -> SbcConfig:
    """Read a TOML file into a fully resolved batch configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    for section in ("design", "sbc"):
        if section not in raw:
            raise ConfigError(f"missing [{section}] section")
    design = _parse_design(raw["design"])

    priors = default_priors(design)
    for label, spec in raw.get("priors", {}).items():
        if label not in priors:
            raise ConfigError(f"prior label {label!r} not used by design {design.design_id}")
        priors[label] = _parse_prior(label, spec)

    sbc = raw["sbc"]
    sampler_raw = raw.get("sampler", {})
    bridge_raw = raw.get("bridge", {})
    try:
        sampler = SamplerConfig(
            n_chains=int(sampler_raw.get("n_chains", 4)),
            n_warmup=int(sampler_raw.get("n_warmup", 2000)),
            n_draws_total=int(sampler_raw.get("n_draws_total", 8000)),
            target_accept=float(sampler_raw.get("target_accept", 0.9)),
            max_treedepth=int(sampler_raw.get("max_treedepth", 10)),
        )
        bridge = BridgeConfig(
            maxiter=int(bridge_raw.get("maxiter", 1000)),
            tol=float(bridge_raw.get("tol", 1e-10)),
            method=str(bridge_raw.get("method", "warp3")),
        )
        return SbcConfig(
            design=design,
            effect=str(sbc["effect"]),
            prior_h1=float(sbc["prior_h1"]),
            n_sims=int(sbc["n_sims"]),
            sampler=sampler,
            bridge=bridge,
            base_seed=int(sbc.get("base_seed", 0)),
            priors=priors,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


def _prior_dict(fam) -> dict:
    return {"family": type(fam).__name__, **asdict(fam)}


def config_to_dict(config: SbcConfig) -> dict:
    """Canonical plain-dict form of everything that affects the results."""
    priors = config.priors or default_priors(config.design)
    sampler = asdict(config.sampler)
    sampler.pop("seed")  # per-fit seeds derive from base_seed, not this field
    return {
        "design": asdict(config.design),
        "effect": config.effect,
        "prior_h1": config.prior_h1,
        "n_sims": config.n_sims,
        "base_seed": config.base_seed,
        "sampler": sampler,
        "bridge": asdict(config.bridge),
        "priors": {label: _prior_dict(fam) for label, fam in sorted(priors.items())},
    }


def config_hash(config: SbcConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
