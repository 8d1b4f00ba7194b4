"""Sensor fault estimation filters designed from identified Markov parameters."""

from ._core import (
    Filter,
    NumericalError,
    Predictor,
    ValidationError,
    Xi,
    closed_loop_data,
    compare,
    design,
    identify,
    invariant_zeros,
    model_filter,
    plant_names,
    predictor,
    registry_predictor,
)

__all__ = [
    "Filter",
    "NumericalError",
    "Predictor",
    "ValidationError",
    "Xi",
    "closed_loop_data",
    "compare",
    "design",
    "identify",
    "invariant_zeros",
    "model_filter",
    "plant_names",
    "predictor",
    "registry_predictor",
]
