"""Pluggable model interfaces for the guided sampling machinery.

The core never imports a learned model; anything satisfying these protocols
can drive it. Toy reference implementations live in .toy.

Conventions:
    * images are (H, W, 3) float64 in [0, 1]
    * per-image latents are (C, h, w); batches are (B, C, h, w)
    * flow fields use mvmotion.flow.FlowField
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from ..flow import FlowField


@runtime_checkable
class Denoiser(Protocol):
    """Predicts the noise content of a latent at a timestep."""

    def predict_noise(self, x: np.ndarray, t: int, *, cond=None, cfg_scale: float = 1.0) -> np.ndarray:
        ...


@runtime_checkable
class LatentCodec(Protocol):
    """Maps images to latents (spatial factor 8, 4 channels) and back.

    Implementations may additionally expose

        decode_adjoint(grad_image) -> grad_latent

    the adjoint of the (linearized) decoder, which the guidance loop uses to
    pull image-space loss gradients back to latent space. Callers check for
    it with hasattr and raise CapabilityError when they need it and it is
    missing.
    """

    spatial_factor: int
    channels: int

    def encode(self, image: np.ndarray) -> np.ndarray:
        ...

    def decode(self, latent: np.ndarray) -> np.ndarray:
        ...


@runtime_checkable
class FlowEstimator(Protocol):
    """Estimates forward flow between two images.

    Implementations may additionally expose

        flow_loss_and_grad(image_a, image_b, target_flow) -> (loss, grad)

    a differentiable surrogate of the flow-matching loss together with its
    gradient with respect to image_b. Without it, callers fall back to
    finite differences (if enabled) or raise CapabilityError.
    """

    def estimate(self, image_a: np.ndarray, image_b: np.ndarray) -> FlowField:
        ...
