"""Closed-form estimation of moved 3D points from user motion priors.

Four motion modes are supported, each mapping the selected object points
P_o to moved points P_m:

* translation: mean 3D offset of sparse flow-derived point pairs.
* scaling: scalar factor from flow statistics (shrink) or swept-area ratio
  (enlarge), applied multiplicatively.
* rotation: Z-axis rotation about the object centroid.
* stretching: per-point signed plane distances scaled onto the dominant
  user offset.

All functions are pure and operate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import (
    DegenerateFlow,
    DegeneratePlane,
    DegenerateSelection,
    DegenerateStretch,
    InvalidDepth,
    InvalidFactor,
    ValidationError,
)
from .flow import FlowField, moving_mask
from .geometry import backproject, camera_to_world, rotation_about_z
from .scene import CameraView, ObjectPoints

#: Pixels with flow magnitude at or below this do not count as moving.
NONZERO_FLOW_THRESHOLD = 1e-6

Mode = Literal["translation", "scaling", "rotation", "stretching"]


@dataclass
class SparsePointPair:
    """Matched sparse 3D points before (original) and after (moved) motion."""

    original: np.ndarray
    moved: np.ndarray

    def __post_init__(self) -> None:
        self.original = np.ascontiguousarray(self.original, dtype=np.float64).reshape(-1, 3)
        self.moved = np.ascontiguousarray(self.moved, dtype=np.float64).reshape(-1, 3)
        if len(self.original) != len(self.moved):
            raise ValidationError(
                f"pair lengths differ: {len(self.original)} original vs {len(self.moved)} moved"
            )
        if len(self.original) < 1:
            raise ValidationError("sparse point pair must contain at least one point")

    def __len__(self) -> int:
        return len(self.original)

    def offsets(self) -> np.ndarray:
        return self.moved - self.original


@dataclass
class PlaneCoeffs:
    """Vertical plane A*x + B*y + D = 0 (parallel to the world Z axis)."""

    A: float
    B: float
    D: float

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        norm = float(np.hypot(self.A, self.B))
        return (self.A * pts[..., 0] + self.B * pts[..., 1] + self.D) / norm


@dataclass
class MotionSpec:
    """A validated user motion prior for one reference view.

    Exactly the fields required by the mode must be set:

    * translation: sparse_flow
    * scaling: sparse_flow and scale_mode
    * rotation: angle_deg
    * stretching: sparse_flow and stretch_line

    Optional behavior flags (scale_anchor, clamp_stretch) are allowed for
    their respective modes only.
    """

    mode: Mode
    reference_view: str
    sparse_flow: FlowField | None = None
    angle_deg: float | None = None
    scale_mode: Literal["shrink", "enlarge"] | None = None
    stretch_line: tuple[tuple[float, float], tuple[float, float]] | None = None
    scale_anchor: Literal["origin", "centroid"] = "origin"
    clamp_stretch: bool = False

    def __post_init__(self) -> None:
        required = {
            "translation": {"sparse_flow"},
            "scaling": {"sparse_flow", "scale_mode"},
            "rotation": {"angle_deg"},
            "stretching": {"sparse_flow", "stretch_line"},
        }
        if self.mode not in required:
            raise ValidationError(f"unknown motion mode {self.mode!r}")
        present = {
            name
            for name in ("sparse_flow", "angle_deg", "scale_mode", "stretch_line")
            if getattr(self, name) is not None
        }
        if present != required[self.mode]:
            raise ValidationError(
                f"mode {self.mode!r} requires exactly {sorted(required[self.mode])}, got {sorted(present)}"
            )
        if self.angle_deg is not None and not (-360.0 < float(self.angle_deg) < 360.0):
            raise ValidationError(f"angle_deg must lie in (-360, 360), got {self.angle_deg}")


def unproject_sparse(view: CameraView, flow: FlowField, mask: np.ndarray | None = None) -> SparsePointPair:
    """Lift a sparse single-view flow to matched 3D point pairs.

    For each selected pixel (c_x, c_y) with depth d, the original point is
    the pinhole backprojection of the pixel at depth d, and the moved point
    is the backprojection of (c_x + f_x, c_y + f_y) at the same depth d,
    both mapped to world coordinates through the inverse extrinsics.

    Args:
        view: camera supplying depth, intrinsics and pose.
        flow: single-view sparse flow f_s defined on the view's raster.
        mask: pixel selection; defaults to valid pixels with non-zero flow.

    Raises:
        DegenerateSelection: the selection is empty.
        InvalidDepth: a selected pixel has no positive depth.
    """
    if flow.shape != (view.height, view.width):
        raise ValidationError(f"flow {flow.shape} does not match view {view.view_id}")
    if mask is None:
        mask = moving_mask(flow, NONZERO_FLOW_THRESHOLD)
    else:
        mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise DegenerateSelection("no pixels selected for sparse unprojection")
    d = view.depth[ys, xs]
    if (d <= 0).any():
        bad = int((d <= 0).sum())
        raise InvalidDepth(f"{bad} selected pixels have no valid depth in view {view.view_id}")
    uv = np.stack([xs, ys], axis=1).astype(np.float64)
    uv_moved = uv + np.stack([flow.u[ys, xs], flow.v[ys, xs]], axis=1)
    cam_o = backproject(uv, d, view.K)
    cam_m = backproject(uv_moved, d, view.K)
    return SparsePointPair(
        original=camera_to_world(cam_o, view.R, view.T),
        moved=camera_to_world(cam_m, view.R, view.T),
    )


def translation_offset(pair: SparsePointPair) -> np.ndarray:
    """Mean 3D offset p_off over all sparse pairs."""
    return pair.offsets().mean(axis=0)


def estimate_translation(pair: SparsePointPair, obj: ObjectPoints) -> ObjectPoints:
    """Shift every object point by the mean sparse offset."""
    p_off = translation_offset(pair)
    return ObjectPoints(points=obj.points + p_off, source_label=obj.source_label)


def estimate_scale_shrink(flow: FlowField) -> float:
    """Shrink factor: sum of flow magnitudes over N times the maximum.

    Only pixels with non-zero flow magnitude participate, which bounds the
    result to (0, 1]: the factor is the mean magnitude normalized by the
    peak magnitude.

    Raises:
        DegenerateFlow: the field has no moving pixel.
    """
    mags = flow.magnitude()[moving_mask(flow, NONZERO_FLOW_THRESHOLD)]
    if mags.size == 0:
        raise DegenerateFlow("all-zero flow field, shrink factor undefined")
    return float(mags.sum() / (mags.size * mags.max()))


def estimate_scale_enlarge(flow: FlowField, center: tuple[float, float]) -> float:
    """Enlarge factor: swept-area ratio.

    Every moving pixel sweeps the segment from itself to itself plus its
    flow, rasterized at 0.5 px steps; the factor is the pixel count of the
    union of swept segments and the moving region, divided by the count of
    the moving region alone. The result is always >= 1. The center argument
    is validated to lie inside the raster but does not enter the areas.

    Raises:
        DegenerateFlow: the field has no moving pixel.
        ValidationError: center outside the raster.
    """
    H, W = flow.shape
    cx, cy = float(center[0]), float(center[1])
    if not (0 <= cx < W and 0 <= cy < H):
        raise ValidationError(f"enlarge center ({cx}, {cy}) outside raster {W}x{H}")
    region = moving_mask(flow, NONZERO_FLOW_THRESHOLD)
    if not region.any():
        raise DegenerateFlow("all-zero flow field, enlarge factor undefined")

    ys, xs = np.nonzero(region)
    fu = flow.u[ys, xs]
    fv = flow.v[ys, xs]
    length = np.hypot(fu, fv)
    steps = np.maximum(np.ceil(length / 0.5).astype(np.int64), 1)
    swept = np.zeros((H, W), dtype=bool)
    for n in np.unique(steps):
        sel = steps == n
        t = np.linspace(0.0, 1.0, int(n) + 1)[None, :]
        px = xs[sel, None] + fu[sel, None] * t
        py = ys[sel, None] + fv[sel, None] * t
        ix = np.rint(px).astype(np.int64).ravel()
        iy = np.rint(py).astype(np.int64).ravel()
        ok = (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        swept[iy[ok], ix[ok]] = True
    o_r = swept | region
    return float(o_r.sum() / region.sum())


def apply_scaling(
    obj: ObjectPoints, s_f: float, anchor: Literal["origin", "centroid"] = "origin"
) -> ObjectPoints:
    """Scale object points by s_f.

    The default scales about the world origin (coordinates multiply
    directly). anchor="centroid" translates to the centroid, scales, and
    translates back, which preserves the object's position.

    Raises:
        InvalidFactor: s_f <= 0 or non-finite.
    """
    s = float(s_f)
    if not np.isfinite(s) or s <= 0:
        raise InvalidFactor(f"scale factor must be finite and > 0, got {s_f}")
    if anchor == "centroid":
        c = obj.centroid()
        pts = c + s * (obj.points - c)
    else:
        pts = s * obj.points
    return ObjectPoints(points=pts, source_label=obj.source_label)


def apply_rotation(obj: ObjectPoints, angle_deg: float) -> ObjectPoints:
    """Rotate object points about the world Z axis through their centroid.

    The rotation matrix is the standard right-handed Z rotation; the pivot
    is the centroid of the input points, so the centroid is a fixed point
    and all pairwise distances are preserved.
    """
    angle = float(angle_deg)
    if not np.isfinite(angle):
        raise ValidationError(f"angle must be finite, got {angle_deg}")
    rot = rotation_about_z(np.deg2rad(angle))
    c = obj.centroid()
    return ObjectPoints(points=(obj.points - c) @ rot.T + c, source_label=obj.source_label)


def fit_stretch_plane(p1: np.ndarray, p2: np.ndarray) -> PlaneCoeffs:
    """Fit the vertical plane through two 3D points.

    The plane is parallel to the world Z axis and contains both points'
    XY projections:

        A = y2 - y1,  B = x1 - x2,  D = (x2 - x1) * y1 - (y2 - y1) * x1

    Raises:
        DegeneratePlane: the XY projections coincide.
    """
    x1, y1 = float(p1[0]), float(p1[1])
    x2, y2 = float(p2[0]), float(p2[1])
    if np.hypot(x2 - x1, y2 - y1) < 1e-12:
        raise DegeneratePlane(f"stretch endpoints coincide in XY: ({x1}, {y1})")
    return PlaneCoeffs(A=y2 - y1, B=x1 - x2, D=(x2 - x1) * y1 - (y2 - y1) * x1)


def max_offset(pair: SparsePointPair) -> np.ndarray:
    """The single sparse offset vector with the largest Euclidean norm."""
    offs = pair.offsets()
    return offs[int(np.argmax(np.linalg.norm(offs, axis=1)))]


def apply_stretch(
    obj: ObjectPoints,
    plane: PlaneCoeffs,
    pair: SparsePointPair,
    clamp: bool = False,
) -> ObjectPoints:
    """Stretch object points away from a plane along the dominant offset.

    Each point's signed distance to the plane is normalized by the maximum
    absolute distance, giving a per-point factor t_f in [-1, 1]; the point
    moves by t_f times the sparse offset of maximum norm. Points on the
    plane stay put. With clamp=True, negative factors are zeroed so the
    stretch acts on one side only.

    Raises:
        DegenerateStretch: every point lies on the plane (max |dis| < 1e-12).
    """
    dis = plane.signed_distance(obj.points)
    peak = float(np.abs(dis).max())
    if peak < 1e-12:
        raise DegenerateStretch("all object points lie on the stretch plane")
    t_f = dis / peak
    if clamp:
        t_f = np.clip(t_f, 0.0, 1.0)
    off = max_offset(pair)
    return ObjectPoints(points=obj.points + t_f[:, None] * off, source_label=obj.source_label)
