"""Pipeline stage implementations."""

from .augment import rule_augmentation_stage
from .distill import distillation_stage

__all__ = [
    "rule_augmentation_stage",
    "distillation_stage",
]
