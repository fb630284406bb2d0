"""Guided diffusion sampling: schedules, DDIM, guidance, toy model stack."""

from .guidance import (
    FGSResult,
    GridDenoiser,
    color_loss_and_grad,
    fgs_losses,
    grid_pack,
    grid_unpack,
    guided_epsilon,
    latent_mask,
    lsf_fuse,
)
from .interfaces import Denoiser, FlowEstimator, LatentCodec
from .pipeline import GuidanceConfig, RunResult, StepLoss, ViewMasks, run_mmds, view_masks
from .sampler import add_noise, ddim_invert, ddim_step, predict_x0
from .schedule import NoiseSchedule, ddim_timesteps, linear_schedule
from .toy import BlockMatchingFlow, ToyCodec, ToyDenoiser

__all__ = [
    "BlockMatchingFlow",
    "Denoiser",
    "FGSResult",
    "FlowEstimator",
    "GridDenoiser",
    "GuidanceConfig",
    "LatentCodec",
    "NoiseSchedule",
    "RunResult",
    "StepLoss",
    "ToyCodec",
    "ToyDenoiser",
    "ViewMasks",
    "add_noise",
    "color_loss_and_grad",
    "ddim_invert",
    "ddim_step",
    "ddim_timesteps",
    "fgs_losses",
    "grid_pack",
    "grid_unpack",
    "guided_epsilon",
    "latent_mask",
    "linear_schedule",
    "lsf_fuse",
    "predict_x0",
    "run_mmds",
    "view_masks",
]
