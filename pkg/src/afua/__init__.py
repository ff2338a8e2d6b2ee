"""Behavioral model of an analog gated recurrent network for chewing detection."""
from .core import (ConfigurationError, DimensionError, IntegratorConfig, ModelParams,
                   activation, integrate_continuous, run_discrete, step_discrete)
from .netsim import Label, QuantizedParams, accuracy, quantize, roc
from .trainer import TrainConfig, train, train_with_restarts
from .pipeline import RunConfig, run_pipeline

__all__ = ["ConfigurationError", "DimensionError", "IntegratorConfig", "ModelParams",
           "activation", "integrate_continuous", "run_discrete", "step_discrete", "Label",
           "QuantizedParams", "accuracy", "quantize", "roc", "TrainConfig", "train",
           "train_with_restarts", "RunConfig", "run_pipeline"]
__version__ = "0.1.0"
