"""Bayesian inference and forecasting for time series on the unit sphere.

Offline inference runs a slice-within-Gibbs sampler over states, latent
lengths, and static parameters; online inference runs a Rao-Blackwellized
particle filter over the lengths with exact per-particle state posteriors.
Forecasts are produced and scored with wrap-aware circular summaries.
"""

from ._backend import backend_name
from .directional import (
    SigmaStructured,
    angle_to_unit,
    assemble_sigma,
    circular_distance,
    sample_projected_normal,
    split_sigma,
    unit_to_angle,
    wrap_angle,
)
from .forecast import (
    ForecastInterval,
    circular_median,
    circular_quantile,
    crps,
    forecast_interval,
    mce,
    mcrps,
    mean_direction,
    mil_and_coverage,
    posterior_predictive,
)
from .gibbs import (
    FixedTheta,
    GibbsDraws,
    ModelSpec,
    Priors,
    ThetaDraw,
    default_priors,
    gibbs_sweep,
    run_gibbs,
)
from .kalman import (
    KalmanStats,
    StateSpaceParams,
    kalman_filter_pass,
    kalman_predict_update,
    simulate_series,
    simulation_smoother,
)
from .rbpf import (
    Particle,
    Swarm,
    SwarmConfig,
    effective_sample_size,
    filter_series,
    init_swarm,
    predictive_sample,
    rbpf_step,
)

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "SigmaStructured",
    "angle_to_unit",
    "assemble_sigma",
    "circular_distance",
    "sample_projected_normal",
    "split_sigma",
    "unit_to_angle",
    "wrap_angle",
    "ForecastInterval",
    "circular_median",
    "circular_quantile",
    "crps",
    "forecast_interval",
    "mce",
    "mcrps",
    "mean_direction",
    "mil_and_coverage",
    "posterior_predictive",
    "FixedTheta",
    "GibbsDraws",
    "ModelSpec",
    "Priors",
    "ThetaDraw",
    "default_priors",
    "gibbs_sweep",
    "run_gibbs",
    "KalmanStats",
    "StateSpaceParams",
    "kalman_filter_pass",
    "kalman_predict_update",
    "simulate_series",
    "simulation_smoother",
    "Particle",
    "Swarm",
    "SwarmConfig",
    "effective_sample_size",
    "filter_series",
    "init_swarm",
    "predictive_sample",
    "rbpf_step",
    "__version__",
]
