"""Evaluation metrics for edited multi-view images.

Three numbers summarize an edit: how accurately content moved where the
flow commanded (mpa), how faithfully the moved texture survived (atf), and
how consistent the edited views are with each other under a rotation-only
homography (mvc). Images may be uint8 or float; uint8 is rescaled to [0, 1]
so both metrics and PSNR live on the unit intensity scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import NoOverlap, ValidationError
from .flow import FlowField, forward_splat, moving_mask
from .geometry import pure_rotation_homography
from .scene import CameraView

log = logging.getLogger(__name__)

#: Identical images would give infinite PSNR; the report caps it here.
PSNR_CAP_DB = 99.0


@dataclass
class MetricReport:
    """Aggregate metric values for one edited scene."""

    mpa: float
    atf: float
    mvc: float
    lambdas: tuple[float, float] = (1.0, 1.0)
    mpa_raw: float = 0.0
    atf_raw: float = 0.0
    atf_empty_views: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.mpa < 0 or self.atf < 0:
            raise ValidationError(f"mpa and atf must be >= 0, got {self.mpa}, {self.atf}")
        if not 0.0 <= self.mvc <= PSNR_CAP_DB:
            raise ValidationError(f"mvc must be in [0, {PSNR_CAP_DB}], got {self.mvc}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mpa": self.mpa,
            "atf": self.atf,
            "mvc": self.mvc,
            "lambda_mpa": self.lambdas[0],
            "lambda_atf": self.lambdas[1],
            "mpa_raw": self.mpa_raw,
            "atf_raw": self.atf_raw,
            "atf_empty_views": self.atf_empty_views,
        }


def _unit_scale(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def mpa(
    image_in: np.ndarray,
    image_out: np.ndarray,
    f_m: FlowField,
    estimator,
    lam: float = 1.0,
) -> float:
    """Motion position accuracy: mean absolute flow error, scaled by lam.

    The estimator recovers the flow actually realized between the input and
    edited images; the error is the per-pixel L1 difference (|du| + |dv|)
    against the commanded flow, averaged over the commanded flow's valid
    pixels.
    """
    a = _unit_scale(image_in)
    b = _unit_scale(image_out)
    if a.shape != b.shape or a.shape[:2] != f_m.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape} vs flow {f_m.shape}")
    f_p = estimator.estimate(a, b)
    m = f_m.valid
    if not m.any():
        return 0.0
    err = np.abs(f_m.u - f_p.u)[m] + np.abs(f_m.v - f_p.v)[m]
    return abs(float(lam)) * float(err.mean())


def atf(
    image_in: np.ndarray,
    image_out: np.ndarray,
    f_m: FlowField,
    lam: float = 1.0,
) -> tuple[float, bool]:
    """Appearance texture fidelity: L1 against the forward-warped input.

    The input is forward-warped by the commanded flow and compared with the
    edited image over the non-zero region of the flow, restricted to pixels
    the warp actually wrote (unwritten pixels have no reference content).
    An empty mask (zero flow, or all moved content leaving the region)
    defines the value as 0 and sets the flag.

    Returns:
        (value, empty_mask) with value on the [0, 1] intensity scale.
    """
    a = _unit_scale(image_in)
    b = _unit_scale(image_out)
    if a.shape != b.shape or a.shape[:2] != f_m.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape} vs flow {f_m.shape}")
    moving = moving_mask(f_m)
    warped, footprint = forward_splat(a, f_m)
    mask = moving & footprint
    if not mask.any():
        log.warning("atf: commanded flow moves nothing, reporting 0")
        return 0.0, True
    return abs(float(lam)) * float(np.abs(warped[mask] - b[mask]).mean()), False


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at PSNR_CAP_DB."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(20.0 * np.log10(peak / np.sqrt(mse)), PSNR_CAP_DB)


def mvc(
    image_1: np.ndarray,
    image_2: np.ndarray,
    view_1: CameraView,
    view_2: CameraView,
) -> float:
    """Multi-view consistency: overlap-only PSNR under a rotation homography.

    Each pixel of view 1 is mapped along its viewing ray into view 2 using
    the two rotations and view 1's intrinsics; pixels whose source sample
    falls inside view 2's raster (and in front of the camera) form the
    overlap. image_2 is bilinearly sampled there and compared with image_1.

    Raises:
        NoOverlap: the fields of view share no pixel.
    """
    a = _unit_scale(image_1)
    b = _unit_scale(image_2)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    H, W = a.shape[:2]
    # Sampling map from view-1 pixels to view-2 pixels; shared intrinsics
    # (view 1's K) as the rotation-only model assumes.
    Hmat = pure_rotation_homography(view_1.K, view_2.R, view_1.K, view_1.R)
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    ones = np.ones_like(xs)
    denom = Hmat[2, 0] * xs + Hmat[2, 1] * ys + Hmat[2, 2] * ones
    sx = Hmat[0, 0] * xs + Hmat[0, 1] * ys + Hmat[0, 2] * ones
    sy = Hmat[1, 0] * xs + Hmat[1, 1] * ys + Hmat[1, 2] * ones
    front = denom > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.where(front, sx / denom, -1.0)
        sy = np.where(front, sy / denom, -1.0)
    overlap = front & (sx >= 0) & (sx <= W - 1) & (sy >= 0) & (sy <= H - 1)
    if not overlap.any():
        raise NoOverlap(f"views {view_1.view_id} and {view_2.view_id} share no pixels")

    if b.ndim == 2:
        b = b[..., None]
        a = a[..., None]
    warped = np.empty_like(b)
    for c in range(b.shape[2]):
        warped[..., c] = ndimage.map_coordinates(b[..., c], [sy, sx], order=1, mode="nearest")
    return psnr(a[overlap], warped[overlap])


def consecutive_pairs(view_ids: Sequence[str]) -> list[tuple[str, str]]:
    return [(view_ids[i], view_ids[i + 1]) for i in range(len(view_ids) - 1)]


def evaluate_scene(
    inputs: Mapping[str, np.ndarray],
    outputs: Mapping[str, np.ndarray],
    flows: Mapping[str, FlowField],
    views: Mapping[str, CameraView],
    estimator,
    lambdas: tuple[float, float] = (1.0, 1.0),
    pairs: Sequence[tuple[str, str]] | None = None,
) -> tuple[MetricReport, list[dict[str, Any]]]:
    """Per-view metrics plus their aggregate report.

    mpa and atf are computed per view; mvc over the given view pairs
    (consecutive views in sorted id order by default). A pair whose fields
    of view share nothing under the rotation homography gets an empty mvc
    cell and is left out of the aggregate; if every pair is like that, the
    scene has no consistency score at all and NoOverlap propagates. Returns
    the report and one row dict per view / per pair, ready for CSV.
    """
    view_ids = sorted(inputs)
    if sorted(outputs) != view_ids:
        raise ValidationError(f"outputs cover {sorted(outputs)}, inputs cover {view_ids}")
    lam_mpa, lam_atf = lambdas
    rows: list[dict[str, Any]] = []
    mpa_vals: list[float] = []
    atf_vals: list[float] = []
    empty_views: list[str] = []
    for vid in view_ids:
        m = mpa(inputs[vid], outputs[vid], flows[vid], estimator, lam=lam_mpa)
        t, empty = atf(inputs[vid], outputs[vid], flows[vid], lam=lam_atf)
        if empty:
            empty_views.append(vid)
        mpa_vals.append(m)
        atf_vals.append(t)
        rows.append({"kind": "view", "subject": vid, "mpa": m, "atf": t, "mvc": ""})

    if pairs is None:
        pairs = consecutive_pairs(view_ids)
    mvc_vals: list[float] = []
    for vid_a, vid_b in pairs:
        try:
            value: float | str = mvc(outputs[vid_a], outputs[vid_b], views[vid_a], views[vid_b])
            mvc_vals.append(value)
        except NoOverlap:
            log.warning("mvc: views %s and %s share no pixels, pair skipped", vid_a, vid_b)
            value = ""
        rows.append({"kind": "pair", "subject": f"{vid_a}->{vid_b}", "mpa": "", "atf": "", "mvc": value})
    if pairs and not mvc_vals:
        raise NoOverlap("no view pair shares any pixels under the rotation homography")

    scale = abs(lam_mpa) if lam_mpa else 1.0
    scale_atf = abs(lam_atf) if lam_atf else 1.0
    report = MetricReport(
        mpa=float(np.mean(mpa_vals)) if mpa_vals else 0.0,
        atf=float(np.mean(atf_vals)) if atf_vals else 0.0,
        mvc=float(np.mean(mvc_vals)) if mvc_vals else 0.0,
        lambdas=(lam_mpa, lam_atf),
        mpa_raw=float(np.mean(mpa_vals)) / scale if mpa_vals else 0.0,
        atf_raw=float(np.mean(atf_vals)) / scale_atf if atf_vals else 0.0,
        atf_empty_views=empty_views,
    )
    return report, rows
