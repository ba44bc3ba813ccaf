"""Frequency-aware diffusion inpainting on latent grids."""
from ._backend import BACKEND
from .denoiser import GmmDenoiser, GmmModel, ToyAttentionDenoiser, AttentionWeights
from .diffusion import NULL_PROMPT, NoiseSchedule, PromptSpec, make_schedule
from .pipeline import PipelineConfig, run_baseline_bld, run_ntn
from .regions import RegionMask

__all__ = [
    "BACKEND",
    "AttentionWeights",
    "GmmDenoiser",
    "GmmModel",
    "NULL_PROMPT",
    "NoiseSchedule",
    "PipelineConfig",
    "PromptSpec",
    "RegionMask",
    "ToyAttentionDenoiser",
    "make_schedule",
    "run_baseline_bld",
    "run_ntn",
]
