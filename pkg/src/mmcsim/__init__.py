"""Modular multilevel converter simulator with open-circuit submodule fault location."""
from ._accel import USE_NUMBA
from .analysis import CriterionInput, dc_current, faulty_current_component, unipolarity_threshold
from .control import ControlParams
from .core import ConverterParams, ConverterState, DivergenceError, FaultSpec, Health
from .detection import DetectorConfig, LocationReport
from .simulate import SimResult, simulate

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA", "CriterionInput", "dc_current", "faulty_current_component",
    "unipolarity_threshold", "ControlParams", "ConverterParams", "ConverterState",
    "DivergenceError", "FaultSpec", "Health", "DetectorConfig", "LocationReport",
    "SimResult", "simulate", "__version__",
]
