"""Bayesian recovery-rate mixture model with a Markov-switching credit cycle."""

from .data import (
    DETERMINANTS,
    DesignMatrix,
    LoanDataset,
    LoanRecord,
    build_design,
    clamp_and_transform,
    inverse_transform,
    load_dataset,
    write_dataset,
)
from .engine import Chain, FitConfig, fit, fit_design, gibbs_step, relabel_states
from .errors import (
    ConfigError,
    DomainError,
    IngestionError,
    InsufficientDataError,
    NotApplicableError,
    NumericError,
    RRMixError,
)
from .ffbs import hamilton_filter, steady_state_prob
from .priors import HyperParams, ModelState, default_hyperparams, sample_prior_state

__version__ = "0.1.0"

__all__ = [
    "Chain", "ConfigError", "DETERMINANTS", "DesignMatrix", "DomainError", "FitConfig",
    "HyperParams", "IngestionError", "InsufficientDataError", "LoanDataset", "LoanRecord",
    "ModelState", "NotApplicableError", "NumericError", "RRMixError", "build_design",
    "clamp_and_transform", "default_hyperparams", "fit", "fit_design", "gibbs_step",
    "hamilton_filter", "inverse_transform", "load_dataset", "relabel_states",
    "sample_prior_state", "steady_state_prob", "write_dataset",
]
