"""Simulator for asynchronous parameter-server training with accumulated gradient normalization."""

from .errors import ConfigError, DegenerateReport, NumericalFault, ParseError
from .metrics import EfficiencyReport, Trace, evaluate, staleness_stats, temporal_efficiency
from .models import MLP, Batch, LogisticRegression, Quadratic
from .server import Commit, ParameterServer
from .sim import DataSpec, DelayModel, ExperimentConfig, ModelSpec, OptimizerSpec, RunResult, run
from .optim import StrategyConfig

__version__ = "0.1.0"

__all__ = [
    "Batch", "Commit", "ConfigError", "DataSpec", "DegenerateReport", "DelayModel",
    "EfficiencyReport", "ExperimentConfig", "LogisticRegression", "MLP", "ModelSpec",
    "NumericalFault", "OptimizerSpec", "ParameterServer", "ParseError", "Quadratic",
    "RunResult", "StrategyConfig", "Trace", "evaluate", "run", "staleness_stats",
    "temporal_efficiency",
]
