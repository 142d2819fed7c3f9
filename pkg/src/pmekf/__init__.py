"""Physiological-model EKF for activity energy expenditure from wearables."""

from .backend import BACKEND
from .ekf import FilterConfig, FilterOutput, constant_hr_mode, run_filter
from .errors import NumericalFailure
from .params import ModelParams, SubjectProfile, basal_state
from .simulator import Scenario, ScenarioSegment, simulate_forward
from .timeseries import TimeSeries

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FilterConfig", "FilterOutput", "ModelParams", "NumericalFailure",
    "Scenario", "ScenarioSegment", "SubjectProfile", "TimeSeries",
    "basal_state", "constant_hr_mode", "run_filter", "simulate_forward",
    "__version__",
]
