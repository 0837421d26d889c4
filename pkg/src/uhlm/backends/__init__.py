"""Pluggable next-token logit providers for the draft and target roles."""

from .base import BackendPair, DistributionPairModel, ModelBackend, Role, sequence_digest
from .synthetic import (
    DirichletPairModel,
    PlantedLinearConfig,
    PlantedLinearPairModel,
    SyntheticPairConfig,
    expected_rejection,
    synthetic_pair,
    tune_coupling,
)

__all__ = [
    "BackendPair",
    "DistributionPairModel",
    "ModelBackend",
    "Role",
    "sequence_digest",
    "DirichletPairModel",
    "PlantedLinearConfig",
    "PlantedLinearPairModel",
    "SyntheticPairConfig",
    "expected_rejection",
    "synthetic_pair",
    "tune_coupling",
]
