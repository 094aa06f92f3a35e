"""Incremental SAGE feature importance for evolving data streams."""

from .core import (
    AbsoluteError,
    CrossEntropy,
    FeatureSpec,
    LabeledSample,
    Schema,
    TargetSpec,
    loss_for_schema,
    make_rng,
)

__version__ = "0.1.0"

__all__ = [
    "AbsoluteError",
    "CrossEntropy",
    "FeatureSpec",
    "LabeledSample",
    "Schema",
    "TargetSpec",
    "loss_for_schema",
    "make_rng",
]
