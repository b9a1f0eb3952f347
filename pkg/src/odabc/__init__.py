"""Approximate Bayesian computation for observation-driven time series.

Pseudo-marginal Metropolis-Hastings with N-try and N-hit likelihood
estimators, plus the models, diagnostics and I/O around them.
"""

from .abc import AbcConfig, alpha_mc, alpha_profile, perturb_dataset, smoothed_loglik
from .diagnostics import abc_mle_grid, cost_report, ks_two_sample, summarize
from .errors import (
    CapExceeded,
    DataError,
    InitializationError,
    NumericalFailure,
    OdabcError,
    UnsupportedKernel,
)
from .estimators import choose_N, nhit_sample, ntry_sample, variance_report
from .mcmc import ChainTrace, ProposalSpec, run_chain
from .models import (
    Dataset,
    ModelSpec,
    ParameterPoint,
    get_model,
    latent_states,
    normal_means,
    normal_scale,
    simulate_dataset,
    stable_garch,
)
from .rng import RngStream, StableParams, sample_stable

__version__ = "0.1.0"

__all__ = [
    "AbcConfig", "alpha_mc", "alpha_profile", "perturb_dataset", "smoothed_loglik",
    "abc_mle_grid", "cost_report", "ks_two_sample", "summarize",
    "CapExceeded", "DataError", "InitializationError", "NumericalFailure", "OdabcError",
    "UnsupportedKernel",
    "choose_N", "nhit_sample", "ntry_sample", "variance_report",
    "ChainTrace", "ProposalSpec", "run_chain",
    "Dataset", "ModelSpec", "ParameterPoint", "get_model", "latent_states", "normal_means",
    "normal_scale", "simulate_dataset", "stable_garch",
    "RngStream", "StableParams", "sample_stable",
]
