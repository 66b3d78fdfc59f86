"""Pipeline building blocks: learners, meta-learners, scalers, filters."""

from stagedml.components.domains import Categorical, IntRange, LogUniform
from stagedml.components.registry import (
    FilterSpec,
    LearnerSpec,
    Registry,
    ScalerSpec,
    UnknownComponentError,
    registry_default,
)

__all__ = [
    "Categorical",
    "FilterSpec",
    "IntRange",
    "LearnerSpec",
    "LogUniform",
    "Registry",
    "ScalerSpec",
    "UnknownComponentError",
    "registry_default",
]
