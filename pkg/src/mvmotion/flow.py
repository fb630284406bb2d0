"""Dense optical flow: projection from 3D motion, warping, occlusion masks.

The flow convention throughout the package is forward flow anchored at the
source image: a pixel x of the input view moves to x + f(x) in the edited
view. Coordinates are (x right, y down) in pixels; flow component u is the
x displacement and v the y displacement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb
from scipy import ndimage

from .errors import EmptyProjection, ValidationError
from .geometry import MIN_DEPTH, project, world_to_camera
from .scene import CameraView, ObjectPoints

#: Splat depth grouping: walking the per-pixel candidates front to back, the
#: front surface extends while consecutive depth gaps stay within tolerance
#: (relative to the candidate depth, with an absolute floor). A larger gap
#: marks a second surface behind the first.
DEPTH_GROUP_REL = 0.01
DEPTH_GROUP_ABS = 0.005  # meters


@dataclass
class FlowField:
    """Dense 2D displacement field with a validity mask.

    Invalid pixels always carry u = v = 0; valid pixels are finite.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if not (self.u.shape == self.v.shape == self.valid.shape) or self.u.ndim != 2:
            raise ValidationError(
                f"flow components must share one HxW shape, got {self.u.shape}/{self.v.shape}/{self.valid.shape}"
            )
        if not np.isfinite(self.u[self.valid]).all() or not np.isfinite(self.v[self.valid]).all():
            raise ValidationError("flow contains NaN/Inf at valid pixels")
        self.u[~self.valid] = 0.0
        self.v[~self.valid] = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    @classmethod
    def zeros(cls, height: int, width: int, valid: bool = True) -> "FlowField":
        return cls(
            u=np.zeros((height, width)),
            v=np.zeros((height, width)),
            valid=np.full((height, width), valid, dtype=bool),
        )


@dataclass
class OcclusionMask:
    """Pixels vacated (revealed) and newly occupied (covered) by a motion."""

    revealed: np.ndarray
    covered: np.ndarray


def _segment_first(order: np.ndarray, seg_ids: np.ndarray) -> np.ndarray:
    """Indices into `order` of the first element of each segment.

    seg_ids must be the segment key evaluated at `order` (already grouped).
    """
    first = np.ones(len(order), dtype=bool)
    first[1:] = seg_ids[1:] != seg_ids[:-1]
    return np.flatnonzero(first)


def project_flow(
    P_o: ObjectPoints | np.ndarray,
    P_m: ObjectPoints | np.ndarray,
    view: CameraView,
    densify: bool = True,
) -> FlowField:
    """Project a 3D point motion into this view's dense flow field.

    Each point pair is projected with the pinhole model; the displacement
    between the two projections is splatted at the nearest pixel of the
    original projection. Collisions are resolved in two stages: candidates
    are first reduced to the front surface, grown from the nearest candidate
    (by camera-frame depth of the original point) while consecutive depth
    gaps stay within max(DEPTH_GROUP_ABS, DEPTH_GROUP_REL * depth), so a
    grazing surface that ramps smoothly through a pixel stays one group
    while a genuinely occluded surface behind a larger gap is dropped. Then
    the candidate whose original projection lies closest to the pixel center
    wins (ties broken by lowest point index). Points behind the camera at
    either endpoint are skipped. Optionally, pixels inside the object's
    projected footprint that received no point are filled from their nearest
    valid neighbor.

    Args:
        P_o: original object points (M, 3 world coordinates).
        P_m: moved object points, same length.
        view: target camera.
        densify: fill holes inside the morphological closure of the
            projected footprint by nearest-valid-neighbor.

    Returns:
        FlowField valid exactly where flow was splatted or filled.

    Raises:
        EmptyProjection: no point pair lands inside the view.
    """
    po = P_o.points if isinstance(P_o, ObjectPoints) else np.asarray(P_o, dtype=np.float64)
    pm = P_m.points if isinstance(P_m, ObjectPoints) else np.asarray(P_m, dtype=np.float64)
    if po.shape != pm.shape:
        raise ValidationError(f"point sets differ in shape: {po.shape} vs {pm.shape}")
    H, W = view.height, view.width

    cam_o = world_to_camera(po, view.R, view.T)
    cam_m = world_to_camera(pm, view.R, view.T)
    in_front = (cam_o[:, 2] > MIN_DEPTH) & (cam_m[:, 2] > MIN_DEPTH)

    uv_o, z_o = project(cam_o[in_front], view.K)
    uv_m, _ = project(cam_m[in_front], view.K)
    ax = np.rint(uv_o[:, 0]).astype(np.int64)
    ay = np.rint(uv_o[:, 1]).astype(np.int64)
    inside = (ax >= 0) & (ax < W) & (ay >= 0) & (ay < H)
    if not inside.any():
        raise EmptyProjection(f"no points project into view {view.view_id}")

    ax, ay = ax[inside], ay[inside]
    uv_o, uv_m, z = uv_o[inside], uv_m[inside], z_o[inside]
    pix = ay * W + ax
    dist2 = (uv_o[:, 0] - ax) ** 2 + (uv_o[:, 1] - ay) ** 2
    idx = np.arange(len(pix))

    # front surface per pixel: grow from the nearest candidate while the
    # depth ladder stays connected (consecutive gaps within tolerance)
    order = np.lexsort((z, pix))
    firsts = _segment_first(order, pix[order])
    seg_of = np.repeat(np.arange(len(firsts)), np.diff(np.append(firsts, len(order))))
    z_sorted = z[order]
    gap = np.diff(z_sorted, prepend=z_sorted[:1])
    tol = np.maximum(DEPTH_GROUP_REL * z_sorted, DEPTH_GROUP_ABS)
    brk = gap > tol
    brk[firsts] = False
    breaks = np.cumsum(brk)
    in_group = breaks == breaks[firsts][seg_of]
    key = np.where(in_group, dist2[order], np.inf)

    # winner per pixel: smallest center distance inside the group, then index
    order2 = np.lexsort((idx[order], key, pix[order]))
    winners = order[order2[_segment_first(order2, pix[order][order2])]]

    u = np.zeros((H, W))
    v = np.zeros((H, W))
    valid = np.zeros((H, W), dtype=bool)
    u[ay[winners], ax[winners]] = uv_m[winners, 0] - uv_o[winners, 0]
    v[ay[winners], ax[winners]] = uv_m[winners, 1] - uv_o[winners, 1]
    valid[ay[winners], ax[winners]] = True

    if densify:
        u, v, valid = _densify(u, v, valid)
    return FlowField(u=u, v=v, valid=valid)


def _densify(u: np.ndarray, v: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-valid-neighbor fill restricted to the closed footprint."""
    footprint = ndimage.binary_closing(valid, structure=np.ones((3, 3), dtype=bool), iterations=2)
    footprint |= valid
    holes = footprint & ~valid
    if holes.any():
        _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
        u = u.copy()
        v = v.copy()
        u[holes] = u[iy[holes], ix[holes]]
        v[holes] = v[iy[holes], ix[holes]]
        valid = valid | holes
    return u, v, valid


def backward_warp(image: np.ndarray, flow: FlowField) -> np.ndarray:
    """Sample the image at x + f(x) with bilinear interpolation.

    Samples outside the raster clamp to the border. Pixels with invalid
    flow copy the input pixel. Integer inputs come back as the same dtype.
    """
    img = np.asarray(image)
    H, W = flow.shape
    if img.shape[:2] != (H, W):
        raise ValidationError(f"image {img.shape[:2]} does not match flow {flow.shape}")
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    sx = np.clip(xs + flow.u, 0, W - 1)
    sy = np.clip(ys + flow.v, 0, H - 1)
    src = img.astype(np.float64)
    if src.ndim == 2:
        src = src[..., None]
    out = np.empty_like(src)
    for c in range(src.shape[2]):
        out[..., c] = ndimage.map_coordinates(src[..., c], [sy, sx], order=1, mode="nearest")
    inv = ~flow.valid
    out[inv] = src[inv]
    if np.asarray(image).ndim == 2:
        out = out[..., 0]
    if np.issubdtype(img.dtype, np.integer):
        return np.rint(out).astype(img.dtype)
    return out


def forward_splat(image: np.ndarray, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Write each valid source pixel at round(x + f(x)).

    Collisions keep the source with the largest flow magnitude (ties broken
    by lowest source index). Returns the splatted image (zeros where nothing
    landed) and the boolean footprint of written pixels.
    """
    img = np.asarray(image)
    H, W = flow.shape
    if img.shape[:2] != (H, W):
        raise ValidationError(f"image {img.shape[:2]} does not match flow {flow.shape}")
    ys, xs = np.nonzero(flow.valid)
    tx = np.rint(xs + flow.u[ys, xs]).astype(np.int64)
    ty = np.rint(ys + flow.v[ys, xs]).astype(np.int64)
    inside = (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
    xs, ys, tx, ty = xs[inside], ys[inside], tx[inside], ty[inside]
    mag = np.hypot(flow.u[ys, xs], flow.v[ys, xs])
    idx = ys * W + xs
    pix = ty * W + tx

    order = np.lexsort((idx, -mag, pix))
    winners = order[_segment_first(order, pix[order])]

    src = img.astype(np.float64)
    if src.ndim == 2:
        src = src[..., None]
    out = np.zeros_like(src)
    out[ty[winners], tx[winners]] = src[ys[winners], xs[winners]]
    footprint = np.zeros((H, W), dtype=bool)
    footprint[ty[winners], tx[winners]] = True
    if np.asarray(image).ndim == 2:
        out = out[..., 0]
    if np.issubdtype(img.dtype, np.integer):
        return np.rint(out).astype(img.dtype), footprint
    return out, footprint


def composite_warp(image: np.ndarray, flow: FlowField, moving: np.ndarray) -> np.ndarray:
    """Forward-warp the moving pixels over the unchanged background.

    Pixels vacated by the motion and not covered again keep their original
    values. Returns float64 regardless of input dtype.
    """
    restricted = FlowField(u=flow.u, v=flow.v, valid=flow.valid & np.asarray(moving, dtype=bool))
    out = np.asarray(image, dtype=np.float64).copy()
    if not restricted.valid.any():
        return out
    splatted, footprint = forward_splat(image, restricted)
    out[footprint] = np.asarray(splatted, dtype=np.float64)[footprint]
    return out


def splat_destination(flow: FlowField, source: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels that source-mask pixels land on under the flow."""
    H, W = flow.shape
    ys, xs = np.nonzero(flow.valid & source)
    tx = np.rint(xs + flow.u[ys, xs]).astype(np.int64)
    ty = np.rint(ys + flow.v[ys, xs]).astype(np.int64)
    inside = (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
    dest = np.zeros((H, W), dtype=bool)
    dest[ty[inside], tx[inside]] = True
    return dest


def occlusion_mask(flow: FlowField, footprint: np.ndarray) -> OcclusionMask:
    """Decompose a motion into revealed and covered pixel sets.

    revealed: inside the object footprint but not written by its motion.
    covered: written by the motion but outside the original footprint.
    """
    footprint = np.asarray(footprint, dtype=bool)
    if footprint.shape != flow.shape:
        raise ValidationError(f"footprint {footprint.shape} does not match flow {flow.shape}")
    dest = splat_destination(flow, footprint)
    return OcclusionMask(revealed=footprint & ~dest, covered=dest & ~footprint)


def moving_mask(flow: FlowField, threshold: float = 1e-6) -> np.ndarray:
    """Valid pixels whose displacement magnitude exceeds the threshold."""
    return flow.valid & (flow.magnitude() > threshold)


def colorize_flow(flow: FlowField) -> np.ndarray:
    """Standard flow color wheel: hue is direction, saturation magnitude.

    Saturation is normalized by the field's own maximum magnitude, value is
    1 at valid pixels, and invalid pixels render black. Zero flow is white.
    """
    mag = flow.magnitude()
    peak = mag[flow.valid].max() if flow.valid.any() else 0.0
    hue = (np.arctan2(flow.v, flow.u) / (2.0 * np.pi)) % 1.0
    sat = mag / peak if peak > 0 else np.zeros_like(mag)
    val = flow.valid.astype(np.float64)
    rgb = hsv_to_rgb(np.stack([hue, sat, val], axis=-1))
    return np.rint(rgb * 255.0).astype(np.uint8)
