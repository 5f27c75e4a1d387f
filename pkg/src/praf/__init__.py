"""Targeted transfer attack with progressive resolution targets and adaptive
intermediate-layer alignment, over toy ViT surrogate ensembles."""

from praf.alignment import LossWeights, SelectionSet
from praf.attack import AttackConfig, AttackTrace, run_attack
from praf.kernels import BACKEND as KERNEL_BACKEND
from praf.resolution import StageSchedule, stage_index, synthesize_stage_target
from praf.surrogate import EncoderConfig, build_ensemble, default_ensemble_configs, init_encoder

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackTrace",
    "EncoderConfig",
    "KERNEL_BACKEND",
    "LossWeights",
    "SelectionSet",
    "StageSchedule",
    "build_ensemble",
    "default_ensemble_configs",
    "init_encoder",
    "run_attack",
    "stage_index",
    "synthesize_stage_target",
]
