"""Simulation and tuning of adaptive backstepping control for an electro-hydraulic servo."""

from .abc import AbcConfig, AbcHistory, FoodSource
from .controller import (AdaptiveState, ControllerConfig, ErrorVector, Gains, SmcConfig,
                         adaptation_rates, compute_errors, control, gains, smc_control,
                         stabilizing_functions)
from .errors import (ConfigError, DivergenceError, DomainError, EvaluationError,
                     IncompleteLog, NonFiniteState, SaturationError)
from .plant import PlantParams, Reference, ReferenceFrame, derivatives, reference
from .sim import (ObjectiveWeights, SimConfig, SimLog, TuningObjective, objective, simulate,
                  ultimate_bound)

__version__ = "0.1.0"
