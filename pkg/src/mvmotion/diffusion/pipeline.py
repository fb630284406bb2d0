"""Multi-view motion-guided sampling: the full editing loop.

Per sampling step: denoiser call (optionally batched into one grid latent),
guidance gradient from the flow and color losses, DDIM update, background
replacement from the inversion trajectory on static latent cells, and
latent fusion of the warped input past the configured step.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import NotFound, Timeout, ValidationError
from ..flow import FlowField, composite_warp, moving_mask, splat_destination
from ..scene import Scene
from .guidance import FGSResult, GridDenoiser, fgs_losses, guided_epsilon, latent_mask, lsf_fuse
from .sampler import add_noise, ddim_invert, ddim_step, predict_x0
from .schedule import NoiseSchedule, ddim_timesteps, linear_schedule


@dataclass
class GuidanceConfig:
    """Knobs of the guided sampling loop.

    sigma_t is the guidance step size of the noise-prediction update; it is
    independent of the DDIM variance (ddim_sigma) and may be a scalar or a
    per-step sequence of length num_steps. lsf_start_step counts sampling
    steps: fusion activates on steps strictly after it, and None resolves
    to 60% of num_steps.
    """

    num_steps: int = 500
    sigma_t: float | tuple[float, ...] = 0.01
    flow_weight: float = 1.0
    color_weight: float = 1.0
    lsf_start_step: int | None = None
    bgc_enabled: bool = True
    cfg_scale: float = 7.5
    ddim_sigma: float = 0.0
    seed: int = 0
    time_budget_s: float | None = None

    def __post_init__(self) -> None:
        if self.num_steps < 1:
            raise ValidationError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.flow_weight < 0 or self.color_weight < 0:
            raise ValidationError(
                f"loss weights must be >= 0, got {self.flow_weight}, {self.color_weight}"
            )
        if np.ndim(self.sigma_t) > 0:
            self.sigma_t = tuple(float(s) for s in self.sigma_t)
            if len(self.sigma_t) != self.num_steps:
                raise ValidationError(
                    f"sigma_t schedule has {len(self.sigma_t)} entries for {self.num_steps} steps"
                )
            bad = [s for s in self.sigma_t if s < 0]
        else:
            self.sigma_t = float(self.sigma_t)
            bad = [self.sigma_t] if self.sigma_t < 0 else []
        if bad:
            raise ValidationError(f"sigma_t must be >= 0, got {bad[0]}")
        if self.lsf_start_step is not None and not 0 <= self.lsf_start_step <= self.num_steps:
            raise ValidationError(
                f"lsf_start_step must be in [0, {self.num_steps}], got {self.lsf_start_step}"
            )
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ValidationError(f"time_budget_s must be positive, got {self.time_budget_s}")

    @property
    def resolved_lsf_start(self) -> int:
        if self.lsf_start_step is not None:
            return self.lsf_start_step
        return int(round(0.6 * self.num_steps))

    def sigma_for(self, step_index: int) -> float:
        if isinstance(self.sigma_t, tuple):
            return self.sigma_t[step_index]
        return self.sigma_t

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_steps": self.num_steps,
            "sigma_t": list(self.sigma_t) if isinstance(self.sigma_t, tuple) else self.sigma_t,
            "flow_weight": self.flow_weight,
            "color_weight": self.color_weight,
            "lsf_start_step": self.lsf_start_step,
            "bgc_enabled": self.bgc_enabled,
            "cfg_scale": self.cfg_scale,
            "ddim_sigma": self.ddim_sigma,
            "seed": self.seed,
            "time_budget_s": self.time_budget_s,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GuidanceConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config fields: {sorted(extra)}")
        kwargs = dict(data)
        if isinstance(kwargs.get("sigma_t"), list):
            kwargs["sigma_t"] = tuple(kwargs["sigma_t"])
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GuidanceConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ViewMasks:
    """Pixel and latent masks derived from one view's motion flow."""

    moving: np.ndarray
    destination: np.ndarray
    fuse_latent: np.ndarray
    static_latent: np.ndarray
    warped_image: np.ndarray


@dataclass
class StepLoss:
    step: int
    t: int
    view_id: str
    flow_loss: float
    color_loss: float


@dataclass
class RunResult:
    images: dict[str, np.ndarray]
    losses: list[StepLoss]
    masks: dict[str, ViewMasks]
    timesteps: np.ndarray
    runtime_s: float
    config: GuidanceConfig
    previews: dict[str, list[np.ndarray]] = field(default_factory=dict)

    def manifest(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "views": sorted(self.images),
            "timesteps": [int(t) for t in self.timesteps],
            "lsf_start_step": self.config.resolved_lsf_start,
            "runtime_s": self.runtime_s,
            "losses": [
                {
                    "step": rec.step,
                    "t": rec.t,
                    "view": rec.view_id,
                    "flow_loss": rec.flow_loss,
                    "color_loss": rec.color_loss,
                }
                for rec in self.losses
            ],
        }


def view_masks(image: np.ndarray, flow: FlowField, factor: int) -> ViewMasks:
    """Derive the masks and warped image the sampling loop needs."""
    moving = moving_mask(flow)
    dest = splat_destination(flow, moving)
    fuse = latent_mask(dest, factor=factor)
    # the complement is downsampled with the same occupancy/dilation policy
    # as the fuse mask; where the two overlap at region borders, fusion runs
    # after the static replacement and wins
    static = latent_mask(~(moving | dest), factor=factor)
    warped = composite_warp(image, flow, moving)
    return ViewMasks(
        moving=moving, destination=dest, fuse_latent=fuse, static_latent=static, warped_image=warped
    )


def run_mmds(
    scene: Scene,
    flows: Mapping[str, FlowField],
    config: GuidanceConfig,
    denoiser,
    codec,
    estimator,
    schedule: NoiseSchedule | None = None,
    cond: Any = None,
    preview_every: int | None = None,
) -> RunResult:
    """Run the guided multi-view edit and return the edited rasters.

    Every view of the scene needs a motion flow; views are processed jointly
    so the grid batching can tile them into one latent when bgc_enabled.

    Raises:
        NotFound: a scene view has no flow.
        Timeout: the configured wall-clock budget was exceeded.
    """
    t_start = time.monotonic()
    if schedule is None:
        schedule = linear_schedule()
    view_ids = [v.view_id for v in scene.views]
    for vid in view_ids:
        if vid not in flows:
            raise NotFound(f"no motion flow for view {vid}")

    rng = np.random.default_rng(config.seed)
    ts = ddim_timesteps(schedule.T, config.num_steps)
    factor = codec.spatial_factor
    use_fgs = config.flow_weight > 0 or config.color_weight > 0

    inputs: dict[str, np.ndarray] = {}
    masks: dict[str, ViewMasks] = {}
    trajectories: dict[str, list[np.ndarray]] = {}
    warped_latents: dict[str, np.ndarray] = {}
    warp_noise: dict[str, np.ndarray] = {}
    latents: dict[str, np.ndarray] = {}
    for vid in view_ids:
        view = scene.view(vid)
        img = np.asarray(view.image, dtype=np.float64) / 255.0
        inputs[vid] = img
        vm = view_masks(img, flows[vid], factor)
        masks[vid] = vm
        z0 = codec.encode(img)
        trajectories[vid] = ddim_invert(
            z0, denoiser, schedule, num_steps=config.num_steps, cond=cond, cfg_scale=config.cfg_scale
        )
        warped_latents[vid] = codec.encode(vm.warped_image)
        warp_noise[vid] = rng.standard_normal(z0.shape)
        latents[vid] = trajectories[vid][-1].copy()

    batched = GridDenoiser(denoiser) if config.bgc_enabled else None
    losses: list[StepLoss] = []
    previews: dict[str, list[np.ndarray]] = {vid: [] for vid in view_ids}
    lsf_start = config.resolved_lsf_start
    num_steps = config.num_steps

    for step in range(1, num_steps + 1):
        if config.time_budget_s is not None and time.monotonic() - t_start > config.time_budget_s:
            raise Timeout(
                f"step budget exceeded: {time.monotonic() - t_start:.1f}s over "
                f"{config.time_budget_s}s after {step - 1} of {num_steps} steps"
            )
        k = num_steps + 1 - step  # position in ts; sampling walks it down
        t, t_prev = int(ts[k]), int(ts[k - 1])

        if batched is not None:
            stack = np.stack([latents[vid] for vid in view_ids])
            eps_all = batched.predict_noise(stack, t, cond=cond, cfg_scale=config.cfg_scale)
            eps_by_view = {vid: eps_all[i] for i, vid in enumerate(view_ids)}
        else:
            eps_by_view = {
                vid: denoiser.predict_noise(latents[vid], t, cond=cond, cfg_scale=config.cfg_scale)
                for vid in view_ids
            }

        sigma_g = config.sigma_for(step - 1)
        a_t = schedule.alpha_bar(t)
        for vid in view_ids:
            eps = eps_by_view[vid]
            if use_fgs:
                x0_pred = predict_x0(latents[vid], eps, t, schedule)
                decoded = codec.decode(x0_pred)
                res: FGSResult = fgs_losses(
                    inputs[vid],
                    decoded,
                    flows[vid],
                    estimator,
                    flow_weight=config.flow_weight,
                    color_weight=config.color_weight,
                )
                losses.append(
                    StepLoss(step=step, t=t, view_id=vid, flow_loss=res.flow_loss, color_loss=res.color_loss)
                )
                grad_latent = codec.decode_adjoint(res.grad) / np.sqrt(a_t)
                eps = guided_epsilon(eps, grad_latent, sigma_g)

            noise = rng.standard_normal(latents[vid].shape) if config.ddim_sigma > 0 else None
            x_bar = ddim_step(latents[vid], eps, t, t_prev, schedule, sigma=config.ddim_sigma, noise=noise)

            vm = masks[vid]
            x_bar[:, vm.static_latent] = trajectories[vid][k - 1][:, vm.static_latent]
            if step > lsf_start and vm.fuse_latent.any():
                x_w = add_noise(warped_latents[vid], t_prev, warp_noise[vid], schedule)
                x_bar = lsf_fuse(x_bar, x_w, vm.fuse_latent)
            latents[vid] = x_bar

            if preview_every and (step % preview_every == 0 or step == num_steps):
                previews[vid].append(codec.decode(latents[vid]))

    images = {vid: codec.decode(latents[vid]) for vid in view_ids}
    return RunResult(
        images=images,
        losses=losses,
        masks=masks,
        timesteps=ts,
        runtime_s=time.monotonic() - t_start,
        config=config,
        previews=previews,
    )
