"""Forward noising, DDIM stepping, and DDIM inversion.

All operations treat latents as plain float64 arrays of shape (B, C, h, w)
(any other shape works too; the math is elementwise). Noise, when a step is
stochastic, is supplied by the caller so that runs stay reproducible.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidConfig, ValidationError
from .schedule import NoiseSchedule, ddim_timesteps


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Noise a clean latent to timestep t: sqrt(a)*x0 + sqrt(1-a)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValidationError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    a = schedule.alpha_bar(t)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def predict_x0(x_t: np.ndarray, eps_pred: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Invert the noising formula for the clean-latent estimate."""
    a = schedule.alpha_bar(t)
    return (np.asarray(x_t, dtype=np.float64) - np.sqrt(1.0 - a) * np.asarray(eps_pred, dtype=np.float64)) / np.sqrt(a)


def ddim_step(
    x_t: np.ndarray,
    eps_pred: np.ndarray,
    t: int,
    t_prev: int,
    schedule: NoiseSchedule,
    sigma: float = 0.0,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One DDIM update from timestep t down to t_prev.

    x_prev = sqrt(a_prev) * x0_pred + sqrt(1 - a_prev - sigma^2) * eps
             + sigma * noise

    sigma = 0 gives the deterministic map; sigma > 0 requires caller-provided
    noise so results stay reproducible.
    """
    if t_prev >= t:
        raise ValidationError(f"t_prev ({t_prev}) must be < t ({t})")
    sigma = float(sigma)
    if sigma < 0:
        raise InvalidConfig(f"sigma must be >= 0, got {sigma}")
    a_prev = schedule.alpha_bar(t_prev)
    var = sigma * sigma
    if var > 1.0 - a_prev + 1e-12:
        raise InvalidConfig(f"sigma^2 = {var} exceeds 1 - alpha_bar(t_prev) = {1.0 - a_prev}")
    x0_pred = predict_x0(x_t, eps_pred, t, schedule)
    out = np.sqrt(a_prev) * x0_pred + np.sqrt(max(1.0 - a_prev - var, 0.0)) * np.asarray(eps_pred, dtype=np.float64)
    if sigma > 0:
        if noise is None:
            raise ValidationError("sigma > 0 requires explicit noise")
        out = out + sigma * np.asarray(noise, dtype=np.float64)
    return out


def ddim_invert(
    x0: np.ndarray,
    denoiser,
    schedule: NoiseSchedule,
    num_steps: int | None = None,
    cond=None,
    cfg_scale: float = 1.0,
    sigma: float = 0.0,
) -> list[np.ndarray]:
    """Run the deterministic DDIM map backwards from a clean latent.

    Uses the usual linearization: the noise prediction at the current
    (less noisy) latent and its timestep stands in for the prediction the
    forward step would have made. Returns the latent at every timestep of
    the subsequence, index-aligned with it (entry 0 is x0 itself).

    Raises:
        InvalidConfig: a stochastic schedule (sigma != 0) was requested.
    """
    if sigma != 0.0:
        raise InvalidConfig("DDIM inversion requires the deterministic map (sigma = 0)")
    if num_steps is not None:
        ts = ddim_timesteps(schedule.T, num_steps)
    elif schedule.timestep_subset is not None:
        ts = schedule.timestep_subset
    else:
        raise InvalidConfig("no timestep subset: pass num_steps or set schedule.timestep_subset")
    x = np.asarray(x0, dtype=np.float64)
    traj = [x]
    for k in range(1, len(ts)):
        t_prev, t = int(ts[k - 1]), int(ts[k])
        eps = denoiser.predict_noise(x, t_prev, cond=cond, cfg_scale=cfg_scale)
        a_prev = schedule.alpha_bar(t_prev)
        a_t = schedule.alpha_bar(t)
        x0_pred = (x - np.sqrt(1.0 - a_prev) * eps) / np.sqrt(a_prev)
        x = np.sqrt(a_t) * x0_pred + np.sqrt(1.0 - a_t) * eps
        traj.append(x)
    return traj
