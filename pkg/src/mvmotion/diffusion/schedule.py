"""Noise schedules and DDIM timestep subsequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, ValidationError


@dataclass
class NoiseSchedule:
    """Cumulative signal coefficients alpha_bar over T discrete timesteps.

    alphas_bar[0] is 1 (or within 1% of it), values stay in (0, 1] and
    decrease strictly, so timestep 0 carries no noise and the final DDIM
    step restores the clean signal exactly.
    """

    alphas_bar: np.ndarray
    timestep_subset: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.alphas_bar = np.ascontiguousarray(self.alphas_bar, dtype=np.float64)
        a = self.alphas_bar
        if a.ndim != 1 or len(a) < 1:
            raise ValidationError("alphas_bar must be a non-empty 1D array")
        if not np.isfinite(a).all() or (a <= 0).any() or (a > 1).any():
            raise ValidationError("alphas_bar values must lie in (0, 1]")
        if len(a) > 1 and not (np.diff(a) < 0).all():
            raise ValidationError("alphas_bar must be strictly decreasing")
        if a[0] < 0.99:
            raise ValidationError(f"alphas_bar[0] must be >= 0.99, got {a[0]}")
        if self.timestep_subset is not None:
            self.timestep_subset = np.ascontiguousarray(self.timestep_subset, dtype=np.int64)

    @property
    def T(self) -> int:
        return len(self.alphas_bar)

    def alpha_bar(self, t: int) -> float:
        t = int(t)
        if not 0 <= t < self.T:
            raise IndexError(f"timestep {t} outside [0, {self.T})")
        return float(self.alphas_bar[t])


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear-beta schedule with an exact no-noise step at t = 0.

    betas[0] is pinned to zero so alphas_bar[0] == 1 exactly; the remaining
    betas ramp linearly between the endpoints.
    """
    if T < 1:
        raise InvalidConfig(f"schedule length must be >= 1, got {T}")
    betas = np.zeros(T, dtype=np.float64)
    if T > 1:
        betas[1:] = np.linspace(beta_start, beta_end, T - 1)
    return NoiseSchedule(alphas_bar=np.cumprod(1.0 - betas))


def ddim_timesteps(T: int, num_steps: int) -> np.ndarray:
    """Increasing subsequence of timesteps from 0 to T-1, length num_steps+1."""
    if num_steps < 1 or num_steps > T - 1:
        raise InvalidConfig(f"num_steps must be in [1, {T - 1}], got {num_steps}")
    return np.floor(np.linspace(0.0, T - 1, num_steps + 1)).astype(np.int64)
