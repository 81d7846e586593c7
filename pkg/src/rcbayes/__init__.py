"""Bayesian grey-box RC thermal models: autodiff, Kalman filtering, NUTS and ADVI."""

from ._version import __version__
from .autodiff import BACKEND
from .advi import AdviConfig, VariationalPosterior
from .density import PriorSet, TargetDensity, build_target, default_priors
from .diagnostics import SummaryReport, credible_interval, gelman_rubin
from .filtering import kalman_loglik, fit_point
from .forecast import ForecastResult, forecast, hvac_hold
from .io import FitArtifact, RunConfig, generate_synthetic, load_csv
from .nuts import NutsConfig, PosteriorSamples
from .thermal_models import (ModelKind, StateSpaceMatrices, ThermalParams, TimeSeriesDataset,
                             build_matrices, simulate)

__all__ = [
    "AdviConfig", "BACKEND", "FitArtifact", "ForecastResult", "ModelKind", "NutsConfig",
    "PosteriorSamples", "PriorSet", "RunConfig", "StateSpaceMatrices", "SummaryReport",
    "TargetDensity", "ThermalParams", "TimeSeriesDataset", "VariationalPosterior",
    "__version__", "build_matrices", "build_target", "credible_interval", "default_priors",
    "fit_point", "forecast", "gelman_rubin", "generate_synthetic", "hvac_hold",
    "kalman_loglik", "load_csv", "simulate",
]
