"""Joint search/recommendation with generated demand intents and translation-based graph propagation."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DualIntentError,
    NumericError,
    ParseError,
    ValidationError,
)
from .estimator import DualIntentRecommender
from .model import DualIntentModel, TrainConfig, Trainer

__all__ = [
    "ConfigError",
    "DataError",
    "DualIntentError",
    "DualIntentModel",
    "DualIntentRecommender",
    "NumericError",
    "ParseError",
    "TrainConfig",
    "Trainer",
    "ValidationError",
    "__version__",
]
