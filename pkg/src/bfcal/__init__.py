"""Calibration checks for bridge-sampled Bayes factors in factorial mixed models."""

__version__ = "0.1.0"

from .analysis import (
    DEFAULT_SCALE,
    ReliabilityCurve,
    consistency_bands,
    evidence_vs_n,
    jzs_paired_bf,
    jzs_paired_log_bf,
    pav_reliability,
    sensitivity_curve,
)
from .analytic import ConjugateNormalModel
from .bridge import (
    BridgeConfig,
    BridgeResult,
    bayes_factor,
    bridge_logml,
    fit_proposal,
    posterior_model_prob,
    warp3_transform,
)
from .designs import DesignSpec, build_design, d1_spec, d2_spec, d3_spec
from .diagnostics import ess, split_rhat
from .models import (
    Dataset,
    ModelSpec,
    ParameterSet,
    UnconstrainedModel,
    default_priors,
    linear_predictor,
    log_likelihood,
    log_prior,
)
from .sampler import Draws, SamplerConfig, leapfrog, sample_posterior
from .sbc import (
    SbcConfig,
    SbcRunRecord,
    SbcSummary,
    analytic_sbc_records,
    marginal_check,
    partition_by_warning,
    run_one,
    run_sbc,
)
from .simulate import draw_parameters, sample_true_model, simulate_dataset

__all__ = [
    "DEFAULT_SCALE",
    "BridgeConfig",
    "BridgeResult",
    "ConjugateNormalModel",
    "Dataset",
    "DesignSpec",
    "Draws",
    "ModelSpec",
    "ParameterSet",
    "ReliabilityCurve",
    "SamplerConfig",
    "SbcConfig",
    "SbcRunRecord",
    "SbcSummary",
    "UnconstrainedModel",
    "analytic_sbc_records",
    "bayes_factor",
    "bridge_logml",
    "build_design",
    "consistency_bands",
    "d1_spec",
    "d2_spec",
    "d3_spec",
    "default_priors",
    "draw_parameters",
    "ess",
    "evidence_vs_n",
    "fit_proposal",
    "jzs_paired_bf",
    "jzs_paired_log_bf",
    "leapfrog",
    "linear_predictor",
    "log_likelihood",
    "log_prior",
    "marginal_check",
    "partition_by_warning",
    "pav_reliability",
    "posterior_model_prob",
    "run_one",
    "run_sbc",
    "sample_posterior",
    "sample_true_model",
    "sensitivity_curve",
    "simulate_dataset",
    "split_rhat",
    "warp3_transform",
]
