"""Scene directory I/O.

Layout of a scene directory:

    cameras.json        array of {view_id, K, R, T, width, height}; K and R
                        are 9 floats row-major, T is 3 floats
    <view_id>.png       8-bit RGB image
    <view_id>.depth.png 16-bit grayscale PNG, depth in millimeters
    cloud.ply           point cloud (positions float32, optional colors)
    cloud.labels        sidecar labels, one integer per line (a PLY int
                        property "label" inside cloud.ply is also accepted)
    meta.json           optional {"name": ..., "world_unit": ...}

Depth is divided by 1000 on load, so in-memory depth is meters.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, NotFound, ValidationError
from .ply import read_ply, write_ply
from .scene import CameraView, Scene, SceneMeta, SegmentedPointCloud

log = logging.getLogger(__name__)

DEPTH_SCALE = 1000.0  # millimeters per meter


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise NotFound(f"{what} missing: {path}")
    return path


def _load_depth_png(path: Path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError(f"{path}: depth PNG must be single-channel, got shape {arr.shape}")
    return arr.astype(np.float64) / DEPTH_SCALE


def _save_depth_png(path: Path, depth_m: np.ndarray) -> None:
    mm = np.rint(np.asarray(depth_m, dtype=np.float64) * DEPTH_SCALE)
    if mm.min() < 0 or mm.max() > 65535:
        raise ValidationError(f"depth out of uint16 millimeter range: [{mm.min()}, {mm.max()}]")
    Image.fromarray(mm.astype(np.uint16)).save(path)


def load_scene(root: str | Path) -> Scene:
    """Load and validate a scene directory.

    Raises:
        NotFound: a required file is absent.
        ValidationError: malformed cameras or mismatched raster dimensions.
        FormatError: unreadable cloud or depth files.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotFound(f"scene directory missing: {root}")
    cam_path = _require(root / "cameras.json", "cameras.json")
    try:
        entries = json.loads(cam_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{cam_path}: invalid JSON ({exc})") from None
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{cam_path}: expected a non-empty array of views")

    views = []
    for entry in entries:
        try:
            vid = str(entry["view_id"])
            K = np.array(entry["K"], dtype=np.float64).reshape(3, 3)
            R = np.array(entry["R"], dtype=np.float64).reshape(3, 3)
            T = np.array(entry["T"], dtype=np.float64).reshape(3)
            width, height = int(entry["width"]), int(entry["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{cam_path}: malformed view entry ({exc})") from None
        img_path = _require(root / f"{vid}.png", f"{vid}.png")
        depth_path = _require(root / f"{vid}.depth.png", f"{vid}.depth")
        image = np.asarray(Image.open(img_path).convert("RGB"))
        depth = _load_depth_png(depth_path)
        if image.shape[:2] != (height, width):
            raise ValidationError(
                f"view {vid}: image is {image.shape[1]}x{image.shape[0]}, "
                f"cameras.json declares {width}x{height}"
            )
        views.append(CameraView(view_id=vid, K=K, R=R, T=T, image=image, depth=depth))

    cloud_path = _require(root / "cloud.ply", "cloud.ply")
    data = read_ply(cloud_path)
    labels = data.get("labels")
    labels_path = root / "cloud.labels"
    if labels_path.exists():
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1).astype(np.int32)
    if labels is None:
        raise NotFound(f"cloud labels missing: no {labels_path} and no label property in {cloud_path}")
    if len(labels) != len(data["positions"]):
        raise ValidationError(
            f"cloud.labels has {len(labels)} entries for {len(data['positions'])} points"
        )
    cloud = SegmentedPointCloud(positions=data["positions"], labels=labels, colors=data.get("colors"))

    meta = SceneMeta(name=root.name)
    meta_path = root / "meta.json"
    if meta_path.exists():
        raw = json.loads(meta_path.read_text())
        meta = SceneMeta(name=raw.get("name", root.name), world_unit=raw.get("world_unit", "meters"))

    log.info("loaded scene %s: %d views, %d points", root, len(views), len(cloud))
    return Scene(views=views, cloud=cloud, meta=meta)


def write_scene(scene: Scene, root: str | Path, binary_cloud: bool = True) -> Path:
    """Write a scene directory (see module docstring for the layout)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in scene.views:
        entries.append(
            {
                "view_id": v.view_id,
                "K": v.K.reshape(-1).tolist(),
                "R": v.R.reshape(-1).tolist(),
                "T": v.T.tolist(),
                "width": v.width,
                "height": v.height,
            }
        )
        Image.fromarray(v.image).save(root / f"{v.view_id}.png")
        _save_depth_png(root / f"{v.view_id}.depth.png", v.depth)
    (root / "cameras.json").write_text(json.dumps(entries, indent=2))
    write_ply(root / "cloud.ply", scene.cloud.positions, colors=scene.cloud.colors, binary=binary_cloud)
    (root / "cloud.labels").write_text("\n".join(str(int(x)) for x in scene.cloud.labels) + "\n")
    (root / "meta.json").write_text(
        json.dumps({"name": scene.meta.name, "world_unit": scene.meta.world_unit}, indent=2)
    )
    log.info("wrote scene %s: %d views, %d points", root, len(scene.views), len(scene.cloud))
    return root
