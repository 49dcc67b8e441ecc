"""Gaussian-process disturbance forecasting for robust economic MPC.

The package is organised bottom-up:

* :mod:`hybridgp.kernels` and :mod:`hybridgp.gp`: exact GP regression with
  composable kernels, age-based forgetting and likelihood training;
* :mod:`hybridgp.forecast`: kernel-composition and auto-regressive
  forecasters, uncertainty envelopes and the hybrid switching rule;
* :mod:`hybridgp.plant` and :mod:`hybridgp.control`: the tank-heater model
  and the robust MPC built on it;
* :mod:`hybridgp.scenario` and :mod:`hybridgp.harness`: disturbance
  profiles, closed-loop simulation and controller comparisons.
"""

from .control import ControlConfig, ControlSolution, evaluate_objective, solve_rempc
from .errors import ForecastError, InputError, NumericalError, SolverError, TrainingError
from .forecast import (
    ConfidenceSpec,
    Envelope,
    ForecastConfig,
    HybridState,
    SwitchDecision,
    critical_value,
    envelope_from_posterior,
    hybrid_forecast,
    kc_forecast,
    nar_forecast,
    switch_decide,
)
from .gp import (
    ForgettingWeights,
    GPDataset,
    Hyperparameters,
    NoiseModel,
    Posterior,
    TrainingResult,
    log_marginal_likelihood,
    posterior,
    train,
)
from .harness import (
    CONTROLLERS,
    Metrics,
    RunRecord,
    SimConfig,
    compare_controllers,
    run_closed_loop,
    sweep_training_horizon,
)
from .kernels import RBF, Constant, Linear, Periodic, Sum, composite_kc, gram_matrix
from .plant import PlantParams, rk4_step, temperature_derivative
from .scenario import DisturbanceTrace, ScenarioSpec, generate

__version__ = "0.1.0"

__all__ = [
    "CONTROLLERS", "RBF", "ConfidenceSpec", "Constant", "ControlConfig", "ControlSolution",
    "DisturbanceTrace", "Envelope", "ForecastConfig", "ForecastError", "ForgettingWeights",
    "GPDataset", "HybridState", "Hyperparameters", "InputError", "Linear", "Metrics",
    "NoiseModel", "NumericalError", "Periodic", "PlantParams", "Posterior", "RunRecord",
    "ScenarioSpec", "SimConfig", "SolverError", "Sum", "SwitchDecision", "TrainingError",
    "TrainingResult", "compare_controllers", "composite_kc", "critical_value",
    "envelope_from_posterior", "evaluate_objective", "generate", "gram_matrix",
    "hybrid_forecast", "kc_forecast", "log_marginal_likelihood", "nar_forecast", "posterior",
    "rk4_step", "run_closed_loop", "solve_rempc", "sweep_training_horizon", "switch_decide",
    "temperature_derivative", "train",
]
