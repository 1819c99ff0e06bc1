"""Spot-volatility based quarticity estimators and Monte Carlo checks."""

from .estimators import (
    EstimateResult,
    EstimatorConfig,
    EstimatorId,
    IncrementSeries,
    SpotVolSeries,
    general_g,
    increments,
    quarticity_naive,
    realized_volatility,
    spot_vol,
    u_statistic,
    vbar,
    vbar_prime,
    vhat,
    vhat_prime,
)
from .mc_harness import (
    KnRule,
    McConfig,
    McReport,
    ci_experiment,
    decomposition_terms,
    ks_distance,
    run_decomposition,
    run_experiment,
    studentize,
    theoretical_variance_constant,
)
from .process_sim import (
    ConstantVol,
    HestonVol,
    ModelSpec,
    SamplingSpec,
    SimulatedPath,
    SinusoidVol,
    observe,
    simulate_path,
    true_integrated_power,
)

__version__ = "0.1.0"
