"""Synthetic multi-view scene generator and analytic motion oracle.

Renders a closed textured room containing one axis-aligned cuboid object by
exact ray casting, so every emitted quantity (depth, labels, the point
cloud, ground-truth flow for an affine object motion, ground-truth moved
images) comes from closed-form geometry rather than from the flow engine
under test. The generator is deterministic given its seed.

World frame: Z up, meters. The object carries segment label 8, the floor 1,
walls and ceiling 2. Depth maps are quantized to millimeters (the on-disk
resolution), and the point cloud is built by backprojecting the quantized
depth, so cloud, depth files and rasters are mutually consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ValidationError
from .geometry import backproject, camera_to_world
from .scene import CameraView, Scene, SceneMeta, SegmentedPointCloud

OBJECT_LABEL = 8
FLOOR_LABEL = 1
WALL_LABEL = 2

ROOM_LO = np.array([-3.0, -1.5, 0.0])
ROOM_HI = np.array([3.0, 5.0, 3.0])
BOX_CENTER = np.array([0.0, 2.5, 0.35])
BOX_SIZE = np.array([1.3, 0.8, 1.2])

# camera rig: yaw offsets (degrees) around the object and eye heights; the
# heights keep every visible object face at moderate incidence so one pixel
# never spans a depth range larger than the splat grouping tolerance
_RIG_YAW = [0.0, -32.0, 32.0, -16.0, 16.0, -40.0, 40.0, -8.0]
_RIG_HEIGHT = [1.5, 1.6, 1.55, 1.75, 1.45, 1.65, 1.5, 1.7]
_RIG_RADIUS = 2.6

_NOISE_GRID = 64


@dataclass
class SynthConfig:
    views: int = 4
    size: int = 512
    seed: int = 0
    texture: Literal["smooth", "checker"] = "smooth"
    object_stride: int = 1
    background_stride: int = 4
    cloud_points: int | None = None
    focal: float | None = None

    def foc(self) -> float:
        return float(self.focal) if self.focal else round(1.22 * self.size)


@dataclass
class SynthGroundTruth:
    """Per-view oracle data captured while rendering the scene."""

    config: SynthConfig
    masks: dict[str, np.ndarray] = field(default_factory=dict)
    points: dict[str, np.ndarray] = field(default_factory=dict)
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    depth_exact: dict[str, np.ndarray] = field(default_factory=dict)
    cameras: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)


def look_at(eye: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera R and T for a camera at eye looking at target.

    Camera axes: x right, y down, z forward (right-handed, image v grows
    downward).
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = target - eye
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValidationError("camera looks straight along the world up axis")
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=0)
    return R, -R @ eye


def _rig(cfg: SynthConfig) -> list[tuple[str, np.ndarray]]:
    if cfg.views < 2 or cfg.views > len(_RIG_YAW):
        raise ValidationError(f"views must be in [2, {len(_RIG_YAW)}], got {cfg.views}")
    out = []
    for i in range(cfg.views):
        yaw = np.deg2rad(_RIG_YAW[i])
        eye = BOX_CENTER + np.array(
            [_RIG_RADIUS * np.sin(yaw), -_RIG_RADIUS * np.cos(yaw), 0.0]
        )
        eye[2] = _RIG_HEIGHT[i]
        out.append((f"view{i}", eye))
    return out


def _intrinsics(cfg: SynthConfig) -> np.ndarray:
    f = cfg.foc()
    c = (cfg.size - 1) / 2.0
    return np.array([[f, 0.0, c], [0.0, f, c], [0.0, 0.0, 1.0]])


def _noise_table(seed: int, label: int, face: int, octave: int) -> np.ndarray:
    rng = np.random.default_rng([seed, label, face, octave])
    return rng.uniform(-1.0, 1.0, size=(_NOISE_GRID, _NOISE_GRID, 3))


def _value_noise(s: np.ndarray, t: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Bilinear value noise on a wrapping lattice; s, t are lattice coords."""
    i = np.floor(s).astype(np.int64)
    j = np.floor(t).astype(np.int64)
    fs = (s - i)[..., None]
    ft = (t - j)[..., None]
    g = _NOISE_GRID
    i0, i1 = i % g, (i + 1) % g
    j0, j1 = j % g, (j + 1) % g
    return (
        table[i0, j0] * (1 - fs) * (1 - ft)
        + table[i1, j0] * fs * (1 - ft)
        + table[i0, j1] * (1 - fs) * ft
        + table[i1, j1] * fs * ft
    )


_BOX_PALETTE = [
    (143, 117, 110),
    (110, 129, 143),
    (138, 137, 114),
    (117, 137, 117),
    (140, 120, 136),
    (126, 127, 143),
]
_ROOM_PALETTE = {
    FLOOR_LABEL: (124, 120, 117),
    WALL_LABEL: (136, 137, 138),
}

# (cell size in meters, amplitude in gray levels) per octave
_SMOOTH_OCTAVES = [(0.5, 16.0), (0.25, 10.0), (0.12, 6.0)]
_CHECKER_CELL = 0.08


def _texture(cfg: SynthConfig, label: int, face: int, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    base = np.array(_BOX_PALETTE[face] if label == OBJECT_LABEL else _ROOM_PALETTE[label], dtype=np.float64)
    color = np.broadcast_to(base, s.shape + (3,)).copy()
    if cfg.texture == "checker":
        parity = (np.floor(s / _CHECKER_CELL) + np.floor(t / _CHECKER_CELL)) % 2
        color += (parity * 2.0 - 1.0)[..., None] * 28.0
    else:
        for k, (cell, amp) in enumerate(_SMOOTH_OCTAVES):
            table = _noise_table(cfg.seed, label, face, k)
            color += amp * _value_noise(s / cell, t / cell, table)
    return np.clip(color, 0.0, 255.0)


def _slab(eye: np.ndarray, D: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Ray/AABB slab intersection. Returns entry t, exit t and face axes."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - eye) / D
        t2 = (hi - eye) / D
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    t_entry = near.max(axis=-1)
    t_exit = far.min(axis=-1)
    entry_axis = near.argmax(axis=-1)
    exit_axis = far.argmin(axis=-1)
    return t_entry, t_exit, entry_axis, exit_axis


def _face_coords(points: np.ndarray, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-plane coordinates of points on an axis-aligned face."""
    s = np.take_along_axis(points, ((axis + 1) % 3)[..., None], axis=-1)[..., 0]
    t = np.take_along_axis(points, ((axis + 2) % 3)[..., None], axis=-1)[..., 0]
    return s, t


def _raycast(
    cfg: SynthConfig,
    K: np.ndarray,
    R: np.ndarray,
    eye: np.ndarray,
    box_map: tuple[np.ndarray, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Render one view. box_map optionally moves the object by an affine map."""
    n = cfg.size
    us, vs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="xy")
    dir_cam = np.stack([(us - K[0, 2]) / K[0, 0], (vs - K[1, 2]) / K[1, 1], np.ones_like(us)], axis=-1)
    D = dir_cam @ R  # world direction with unit camera-z component

    # room interior: the ray's exit point through the enclosing box
    _, t_room, _, room_axis = _slab(eye, D, ROOM_LO, ROOM_HI)
    room_pts = eye + t_room[..., None] * D
    room_side = np.take_along_axis(D, room_axis[..., None], axis=-1)[..., 0] > 0

    # object: intersect in the box's own frame
    if box_map is None:
        eye_b = eye
        D_b = D
    else:
        A, b = box_map
        Ainv = np.linalg.inv(A)
        eye_b = Ainv @ (eye - b)
        D_b = D @ Ainv.T
    lo = BOX_CENTER - BOX_SIZE / 2
    hi = BOX_CENTER + BOX_SIZE / 2
    t_in, t_out, box_axis, _ = _slab(eye_b, D_b, lo, hi)
    hit = (t_in <= t_out) & (t_in > 1e-9) & (t_in < t_room)
    box_pts = eye_b + t_in[..., None] * D_b
    box_side = np.take_along_axis(D_b, box_axis[..., None], axis=-1)[..., 0] < 0  # entering from the positive side

    depth = np.where(hit, t_in, t_room)
    labels = np.where(
        hit,
        OBJECT_LABEL,
        np.where((room_axis == 2) & ~room_side, FLOOR_LABEL, WALL_LABEL),
    )

    image = np.zeros((n, n, 3), dtype=np.float64)
    for axis in range(3):
        for side in (False, True):
            face = 2 * axis + int(side)
            m = hit & (box_axis == axis) & (box_side == side)
            if m.any():
                s, t = _face_coords(box_pts[m], np.full(m.sum(), axis))
                image[m] = _texture(cfg, OBJECT_LABEL, face, s, t)
            m = ~hit & (room_axis == axis) & (room_side == side)
            if m.any():
                lab = FLOOR_LABEL if (axis == 2 and not side) else WALL_LABEL
                s, t = _face_coords(room_pts[m], np.full(m.sum(), axis))
                image[m] = _texture(cfg, lab, face, s, t)
    return {
        "image": np.rint(image).astype(np.uint8),
        "depth": depth,
        "labels": labels.astype(np.int32),
    }


def make_scene(cfg: SynthConfig) -> tuple[Scene, SynthGroundTruth]:
    """Render the scene and assemble Scene plus oracle ground truth."""
    K = _intrinsics(cfg)
    gt = SynthGroundTruth(config=cfg)
    views = []
    cloud_pos, cloud_lab, cloud_col = [], [], []

    for vid, eye in _rig(cfg):
        R, T = look_at(eye, BOX_CENTER)
        rend = _raycast(cfg, K, R, eye)
        depth_q = np.rint(rend["depth"] * 1000.0) / 1000.0
        view = CameraView(view_id=vid, K=K, R=R, T=T, image=rend["image"], depth=depth_q)
        views.append(view)

        n = cfg.size
        us, vs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="xy")
        uv = np.stack([us, vs], axis=-1)
        pts_cam = backproject(uv, depth_q, K)
        pts_world = camera_to_world(pts_cam, R, T).astype(np.float32)

        gt.cameras[vid] = (K.copy(), R.copy(), T.copy(), eye.copy())
        gt.masks[vid] = rend["labels"] == OBJECT_LABEL
        gt.labels[vid] = rend["labels"]
        gt.points[vid] = pts_world
        gt.depth_exact[vid] = rend["depth"]

        for stride, mask in (
            (cfg.object_stride, gt.masks[vid]),
            (cfg.background_stride, ~gt.masks[vid]),
        ):
            sub = np.zeros_like(mask)
            sub[::stride, ::stride] = True
            pick = mask & sub
            cloud_pos.append(pts_world[pick])
            cloud_lab.append(rend["labels"][pick])
            cloud_col.append(rend["image"][pick])

    positions = np.concatenate(cloud_pos)
    labels = np.concatenate(cloud_lab)
    colors = np.concatenate(cloud_col)
    if cfg.cloud_points is not None and cfg.cloud_points < len(positions):
        keep = _stratified_subsample(labels, cfg.cloud_points, cfg.seed)
        positions, labels, colors = positions[keep], labels[keep], colors[keep]

    cloud = SegmentedPointCloud(positions=positions, labels=labels, colors=colors)
    scene = Scene(views=views, cloud=cloud, meta=SceneMeta(name=f"synth-{cfg.seed}"))
    return scene, gt


def _stratified_subsample(labels: np.ndarray, target: int, seed: int) -> np.ndarray:
    """Pick `target` indices keeping at least 3 per label, order preserved."""
    rng = np.random.default_rng(seed + 1)
    forced = []
    for lab in np.unique(labels):
        forced.extend(np.flatnonzero(labels == lab)[:3])
    forced = np.array(sorted(set(forced)), dtype=np.int64)
    rest = np.setdiff1d(np.arange(len(labels)), forced)
    extra = max(0, target - len(forced))
    chosen = rng.choice(rest, size=min(extra, len(rest)), replace=False)
    return np.sort(np.concatenate([forced, chosen]))[:target]


# ---------------------------------------------------------------------------
# analytic motion oracle: affine object maps and their exact projected flow


def rotation_affine(cloud: SegmentedPointCloud, angle_deg: float, label: int = OBJECT_LABEL):
    """Z-rotation about the labeled points' centroid as an affine map (A, b)."""
    pts = cloud.positions[cloud.labels == label].astype(np.float64)
    c = pts.mean(axis=0)
    a = np.deg2rad(float(angle_deg))
    ca, sa = np.cos(a), np.sin(a)
    A = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    return A, c - A @ c


def translation_affine(p_off: np.ndarray):
    return np.eye(3), np.asarray(p_off, dtype=np.float64)


def scaling_affine(s_f: float, anchor: np.ndarray | None = None):
    A = np.eye(3) * float(s_f)
    if anchor is None:
        return A, np.zeros(3)
    anchor = np.asarray(anchor, dtype=np.float64)
    return A, anchor - A @ anchor


def stretch_affine(A_c: float, B_c: float, D_c: float, offset: np.ndarray, max_dis: float):
    """Affine form of the plane-distance stretch map."""
    norm = float(np.hypot(A_c, B_c))
    g = np.array([A_c, B_c, 0.0]) / (norm * float(max_dis))
    off = np.asarray(offset, dtype=np.float64)
    return np.eye(3) + np.outer(off, g), off * (D_c / (norm * float(max_dis)))


def _project_points(P: np.ndarray, K: np.ndarray, R: np.ndarray, T: np.ndarray):
    """Oracle-side pinhole projection, written out explicitly."""
    cam = P @ R.T + T
    x = K[0, 0] * cam[:, 0] / cam[:, 2] + K[0, 2]
    y = K[1, 1] * cam[:, 1] / cam[:, 2] + K[1, 2]
    return x, y


def oracle_flow(gt: SynthGroundTruth, view_id: str, A: np.ndarray, b: np.ndarray):
    """Exact per-pixel flow of the object under an affine map, for one view.

    Returns (u, v, mask): the flow of each object pixel's own 3D point,
    evaluated analytically, defined exactly on the rendered object mask.
    """
    K, R, T, _ = gt.cameras[view_id]
    mask = gt.masks[view_id]
    P = gt.points[view_id][mask].astype(np.float64)
    Pm = P @ A.T + b
    x0, y0 = _project_points(P, K, R, T)
    x1, y1 = _project_points(Pm, K, R, T)
    u = np.zeros(mask.shape)
    v = np.zeros(mask.shape)
    u[mask] = x1 - x0
    v[mask] = y1 - y0
    return u, v, mask


def render_moved(gt: SynthGroundTruth, view_id: str, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Ground-truth edited image: re-render with the object moved by (A, b)."""
    K, R, _, eye = gt.cameras[view_id]
    return _raycast(gt.config, K, R, eye, box_map=(np.asarray(A, dtype=np.float64), np.asarray(b, dtype=np.float64)))["image"]
