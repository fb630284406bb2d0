"""From an authored motion description to per-view dense flows.

This is the layer the CLI and the HTTP service share: JSON motion specs are
validated and rasterized into a single-view sparse flow, lifted to 3D point
motion, and projected into every view. Exports from either entry point go
through write_flow_set so their bytes agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidDepth, NotFound, ValidationError
from .flow import (
    DEPTH_GROUP_ABS,
    DEPTH_GROUP_REL,
    FlowField,
    colorize_flow,
    composite_warp,
    moving_mask,
    occlusion_mask,
    project_flow,
)
from .floio import write_flo
from .geometry import MIN_DEPTH, backproject, camera_to_world, project, world_to_camera
from .kinematics import (
    MotionSpec,
    apply_rotation,
    apply_scaling,
    apply_stretch,
    estimate_scale_enlarge,
    estimate_scale_shrink,
    estimate_translation,
    fit_stretch_plane,
    max_offset,
    translation_offset,
    unproject_sparse,
)
from .scene import CameraView, Scene, select_object

MODES = ("translation", "scaling", "rotation", "stretching")

#: JSON fields every mode accepts, beyond the mode-specific ones.
_COMMON_FIELDS = {"mode", "reference_view"}
_MODE_FIELDS = {
    "translation": {"drag", "brush_radius"},
    "scaling": {"drag", "brush_radius", "scale_mode", "scale_anchor"},
    "rotation": {"angle_deg"},
    "stretching": {"drag", "brush_radius", "stretch_line", "clamp_stretch"},
}
_MODE_REQUIRED = {
    "translation": {"drag"},
    "scaling": {"drag", "scale_mode"},
    "rotation": {"angle_deg"},
    "stretching": {"drag", "stretch_line"},
}


@dataclass
class AuthoredMotion:
    """Validated motion request, still in image space."""

    mode: str
    reference_view: str
    drag: list[tuple[float, float, float, float]] | None = None
    brush_radius: float | None = None
    angle_deg: float | None = None
    scale_mode: str | None = None
    scale_anchor: str = "origin"
    stretch_line: tuple[tuple[float, float], tuple[float, float]] | None = None
    clamp_stretch: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "reference_view": self.reference_view,
            "drag": [list(d) for d in self.drag] if self.drag is not None else None,
            "brush_radius": self.brush_radius,
            "angle_deg": self.angle_deg,
            "scale_mode": self.scale_mode,
            "scale_anchor": self.scale_anchor,
            "stretch_line": [list(p) for p in self.stretch_line] if self.stretch_line else None,
            "clamp_stretch": self.clamp_stretch,
        }


def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    return float(value)


def parse_motion_spec(data: Mapping[str, Any] | str) -> AuthoredMotion:
    """Validate a motion-spec JSON document.

    The schema is mode-dependent: translation and scaling take drag vectors,
    rotation an angle, stretching drag vectors plus a two-point line. Keys
    that do not belong to the mode are rejected.

    Raises:
        ValidationError: missing/extra fields or wrong types.
    """
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"motion spec is not valid JSON: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ValidationError(f"motion spec must be a JSON object, got {type(data).__name__}")

    mode = data.get("mode")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    ref = data.get("reference_view")
    if not isinstance(ref, str) or not ref:
        raise ValidationError(f"reference_view must be a non-empty string, got {ref!r}")

    allowed = _COMMON_FIELDS | _MODE_FIELDS[mode]
    extra = set(data) - allowed
    if extra:
        raise ValidationError(f"fields {sorted(extra)} are not valid for mode {mode!r}")
    missing = _MODE_REQUIRED[mode] - {k for k, v in data.items() if v is not None}
    if missing:
        raise ValidationError(f"mode {mode!r} requires fields {sorted(missing)}")

    out = AuthoredMotion(mode=mode, reference_view=ref)

    if "drag" in data:
        drag = data["drag"]
        if not isinstance(drag, list) or not drag:
            raise ValidationError("drag must be a non-empty list of [x, y, dx, dy] vectors")
        parsed = []
        for i, vec in enumerate(drag):
            if not isinstance(vec, (list, tuple)) or len(vec) != 4:
                raise ValidationError(f"drag[{i}] must be [x, y, dx, dy], got {vec!r}")
            parsed.append(tuple(_number(c, f"drag[{i}][{j}]") for j, c in enumerate(vec)))
        out.drag = parsed
        radius = data.get("brush_radius")
        if radius is not None:
            radius = _number(radius, "brush_radius")
            if radius <= 0:
                raise ValidationError(f"brush_radius must be positive, got {radius}")
        out.brush_radius = radius

    if mode == "rotation":
        out.angle_deg = _number(data["angle_deg"], "angle_deg")
        if not -360.0 < out.angle_deg < 360.0:
            raise ValidationError(f"angle_deg must lie in (-360, 360), got {out.angle_deg}")

    if mode == "scaling":
        sm = data["scale_mode"]
        if sm not in ("shrink", "enlarge"):
            raise ValidationError(f"scale_mode must be 'shrink' or 'enlarge', got {sm!r}")
        out.scale_mode = sm
        anchor = data.get("scale_anchor", "origin")
        if anchor not in ("origin", "centroid"):
            raise ValidationError(f"scale_anchor must be 'origin' or 'centroid', got {anchor!r}")
        out.scale_anchor = anchor

    if mode == "stretching":
        line = data["stretch_line"]
        if not isinstance(line, (list, tuple)) or len(line) != 2:
            raise ValidationError("stretch_line must be [[x1, y1], [x2, y2]]")
        pts = []
        for i, p in enumerate(line):
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise ValidationError(f"stretch_line[{i}] must be [x, y], got {p!r}")
            pts.append((_number(p[0], "stretch x"), _number(p[1], "stretch y")))
        out.stretch_line = (pts[0], pts[1])
        clamp = data.get("clamp_stretch", False)
        if not isinstance(clamp, bool):
            raise ValidationError(f"clamp_stretch must be a boolean, got {clamp!r}")
        out.clamp_stretch = clamp

    return out


def object_footprint(scene: Scene, view: CameraView, label: int) -> np.ndarray:
    """Pixels of this view covered by the labeled object's visible points.

    Points are projected and kept when their camera depth agrees with the
    view's depth raster (same tolerance as the flow splat), so points hidden
    behind nearer geometry do not leak into the footprint. Small sampling
    gaps are closed morphologically.

    Raises:
        NotFound: the label does not exist in the scene cloud.
    """
    if label not in scene.labels():
        raise NotFound(f"label {label} not present in scene (have {scene.labels()})")
    pts = scene.cloud.positions[scene.cloud.labels == label].astype(np.float64)
    cam = world_to_camera(pts, view.R, view.T)
    front = cam[:, 2] > MIN_DEPTH
    uv, z = project(cam[front], view.K)
    ix = np.rint(uv[:, 0]).astype(np.int64)
    iy = np.rint(uv[:, 1]).astype(np.int64)
    inside = (ix >= 0) & (ix < view.width) & (iy >= 0) & (iy < view.height)
    ix, iy, z = ix[inside], iy[inside], z[inside]
    stored = view.depth[iy, ix]
    tol = np.maximum(DEPTH_GROUP_REL * z, DEPTH_GROUP_ABS)
    visible = (stored > 0) & (z <= stored + tol)
    mask = np.zeros((view.height, view.width), dtype=bool)
    mask[iy[visible], ix[visible]] = True
    closed = ndimage.binary_closing(mask, structure=np.ones((3, 3), dtype=bool), iterations=2)
    return closed | mask


def label_raster(scene: Scene, view: CameraView) -> np.ndarray:
    """Per-pixel label map of the view (-1 where no cloud point lands).

    The nearest point wins each pixel; points occluded per the view's depth
    raster are dropped first.
    """
    pts = scene.cloud.positions.astype(np.float64)
    labels = scene.cloud.labels
    cam = world_to_camera(pts, view.R, view.T)
    front = cam[:, 2] > MIN_DEPTH
    uv, z = project(cam[front], view.K)
    lab = labels[front]
    ix = np.rint(uv[:, 0]).astype(np.int64)
    iy = np.rint(uv[:, 1]).astype(np.int64)
    inside = (ix >= 0) & (ix < view.width) & (iy >= 0) & (iy < view.height)
    ix, iy, z, lab = ix[inside], iy[inside], z[inside], lab[inside]
    stored = view.depth[iy, ix]
    tol = np.maximum(DEPTH_GROUP_REL * z, DEPTH_GROUP_ABS)
    visible = (stored > 0) & (z <= stored + tol)
    ix, iy, z, lab = ix[visible], iy[visible], z[visible], lab[visible]

    out = np.full((view.height, view.width), -1, dtype=np.int32)
    if len(ix) == 0:
        return out
    pix = iy * view.width + ix
    order = np.lexsort((z, pix))
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix[order][1:] != pix[order][:-1]
    winners = order[first]
    out[iy[winners], ix[winners]] = lab[winners]
    return out


def rasterize_drag(
    footprint: np.ndarray,
    drags: list[tuple[float, float, float, float]],
    brush_radius: float | None,
) -> FlowField:
    """Paint drag vectors into a sparse flow over the object footprint.

    With a brush radius, each drag paints its (dx, dy) within the radius of
    its anchor, linearly feathered to zero at the radius; where brushes
    overlap, the drag with the larger local weight wins (later drags win
    ties). Without a radius, each drag floods the whole footprint, so the
    last drag wins everywhere.
    """
    footprint = np.asarray(footprint, dtype=bool)
    H, W = footprint.shape
    u = np.zeros((H, W))
    v = np.zeros((H, W))
    if brush_radius is None:
        x, y, dx, dy = drags[-1]
        u[footprint] = dx
        v[footprint] = dy
        return FlowField(u=u, v=v, valid=footprint.copy())

    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    best = np.zeros((H, W))
    for x, y, dx, dy in drags:
        dist = np.hypot(xs - x, ys - y)
        weight = np.clip(1.0 - dist / brush_radius, 0.0, 1.0)
        paint = footprint & (weight > 0) & (weight >= best)
        u[paint] = dx * weight[paint]
        v[paint] = dy * weight[paint]
        best[paint] = weight[paint]
    return FlowField(u=u, v=v, valid=footprint.copy())


@dataclass
class MotionResult:
    """Everything derived from one authored motion."""

    motion: AuthoredMotion
    label: int
    sparse_flow: FlowField | None
    footprint: np.ndarray
    flows: dict[str, FlowField]
    derived: dict[str, Any]
    moved_points: np.ndarray | None = field(repr=False, default=None)


def _line_point_world(view: CameraView, x: float, y: float) -> np.ndarray:
    if not (0 <= x < view.width and 0 <= y < view.height):
        raise ValidationError(f"stretch point ({x}, {y}) outside raster {view.width}x{view.height}")
    d = float(view.depth[int(round(y)), int(round(x))])
    if d <= 0:
        raise InvalidDepth(f"stretch point ({x}, {y}) has no valid depth")
    cam = backproject(np.array([[x, y]]), np.array([d]), view.K)
    return camera_to_world(cam, view.R, view.T)[0]


def estimate_motion_flows(scene: Scene, label: int, motion: AuthoredMotion) -> MotionResult:
    """Run the full authored-motion path: rasterize, lift, move, project.

    Raises:
        NotFound: unknown reference view or label.
        ValidationError: malformed motion fields.
        DegenerateSelection / DegenerateFlow / DegeneratePlane /
        DegenerateStretch / InvalidDepth / InvalidFactor / EmptyProjection:
            propagated from the kinematic estimators.
    """
    view = scene.view(motion.reference_view)
    obj = select_object(scene, label)
    footprint = object_footprint(scene, view, label)
    derived: dict[str, Any] = {
        "mode": motion.mode,
        "reference_view": motion.reference_view,
        "label": label,
    }

    f_s: FlowField | None = None
    if motion.drag is not None:
        f_s = rasterize_drag(footprint, motion.drag, motion.brush_radius)

    if motion.mode == "translation":
        spec = MotionSpec(mode="translation", reference_view=motion.reference_view, sparse_flow=f_s)
        pair = unproject_sparse(view, spec.sparse_flow)
        p_off = translation_offset(pair)
        moved = estimate_translation(pair, obj)
        derived["p_off"] = [float(c) for c in p_off]
        derived["n_sparse"] = len(pair)
    elif motion.mode == "scaling":
        spec = MotionSpec(
            mode="scaling",
            reference_view=motion.reference_view,
            sparse_flow=f_s,
            scale_mode=motion.scale_mode,
            scale_anchor=motion.scale_anchor,
        )
        if motion.scale_mode == "shrink":
            s_f = estimate_scale_shrink(f_s)
        else:
            cam = world_to_camera(obj.centroid()[None, :], view.R, view.T)
            uv, _ = project(cam, view.K)
            s_f = estimate_scale_enlarge(f_s, (float(uv[0, 0]), float(uv[0, 1])))
        moved = apply_scaling(obj, s_f, anchor=motion.scale_anchor)
        derived["s_f"] = float(s_f)
        derived["scale_mode"] = motion.scale_mode
        derived["scale_anchor"] = motion.scale_anchor
    elif motion.mode == "rotation":
        spec = MotionSpec(
            mode="rotation", reference_view=motion.reference_view, angle_deg=motion.angle_deg
        )
        moved = apply_rotation(obj, spec.angle_deg)
        derived["angle_deg"] = float(spec.angle_deg)
        derived["centroid"] = [float(c) for c in obj.centroid()]
    elif motion.mode == "stretching":
        spec = MotionSpec(
            mode="stretching",
            reference_view=motion.reference_view,
            sparse_flow=f_s,
            stretch_line=motion.stretch_line,
            clamp_stretch=motion.clamp_stretch,
        )
        pair = unproject_sparse(view, spec.sparse_flow)
        p1 = _line_point_world(view, *motion.stretch_line[0])
        p2 = _line_point_world(view, *motion.stretch_line[1])
        plane = fit_stretch_plane(p1, p2)
        moved = apply_stretch(obj, plane, pair, clamp=motion.clamp_stretch)
        derived["plane"] = {"A": plane.A, "B": plane.B, "D": plane.D}
        derived["max_offset"] = [float(c) for c in max_offset(pair)]
        derived["n_sparse"] = len(pair)
    else:  # pragma: no cover - parse_motion_spec guards the mode
        raise ValidationError(f"unknown motion mode {motion.mode!r}")

    flows = {v.view_id: project_flow(obj.points, moved.points, v) for v in scene.views}
    return MotionResult(
        motion=motion,
        label=label,
        sparse_flow=f_s,
        footprint=footprint,
        flows=flows,
        derived=derived,
        moved_points=moved.points,
    )


def warped_previews(scene: Scene, result: MotionResult) -> dict[str, np.ndarray]:
    """Forward-warped uint8 preview image per view."""
    out: dict[str, np.ndarray] = {}
    for vid, flow in result.flows.items():
        img = scene.view(vid).image
        warped = composite_warp(img.astype(np.float64) / 255.0, flow, moving_mask(flow))
        out[vid] = np.rint(np.clip(warped, 0.0, 1.0) * 255.0).astype(np.uint8)
    return out


def write_flow_set(result: MotionResult, out_dir: str | Path) -> dict[str, Any]:
    """Write the per-view flows, previews, masks and the manifest.

    Returns the manifest dict (also written as manifest.json). The same
    writer backs the CLI export and the HTTP export so both produce
    identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, dict[str, str]] = {}
    for vid in sorted(result.flows):
        flow = result.flows[vid]
        flo_path = out / f"{vid}.flo"
        write_flo(flo_path, flow)
        color = colorize_flow(flow)
        Image.fromarray(color).save(out / f"{vid}.flow.png")
        occ = occlusion_mask(flow, flow.valid)
        occ_img = np.zeros((*flow.shape, 3), dtype=np.uint8)
        occ_img[occ.revealed] = (220, 60, 60)
        occ_img[occ.covered] = (60, 60, 220)
        Image.fromarray(occ_img).save(out / f"{vid}.occlusion.png")
        files[vid] = {
            "flo": f"{vid}.flo",
            "mask": f"{vid}.mask.png",
            "flow_png": f"{vid}.flow.png",
            "occlusion_png": f"{vid}.occlusion.png",
        }
    manifest = {
        "motion_spec": result.motion.to_dict(),
        "label": result.label,
        "derived": result.derived,
        "views": sorted(result.flows),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
