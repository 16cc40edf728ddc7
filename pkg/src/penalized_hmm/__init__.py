"""Poisson hidden Markov models with shrinkage priors on their switching rates."""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    CountSeries,
    CovariateParams,
    DataError,
    EmissionParams,
    Hyperparams,
    ModelSpec,
    NumericalError,
    ParamState,
    PenaltySpec,
    PosteriorSample,
    ProbabilityRows,
    SwitchRates,
)
from .sampler import run_chain, run_chains
from .selection import mspe, tau_sweep

__all__ = [
    "ConfigError",
    "CountSeries",
    "CovariateParams",
    "DataError",
    "EmissionParams",
    "Hyperparams",
    "ModelSpec",
    "NumericalError",
    "ParamState",
    "PenaltySpec",
    "PosteriorSample",
    "ProbabilityRows",
    "SwitchRates",
    "run_chain",
    "run_chains",
    "mspe",
    "tau_sweep",
]
