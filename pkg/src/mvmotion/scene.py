"""Core scene data model: cameras, rasters, the labeled point cloud.

A Scene is immutable after construction. All arrays are normalized to fixed
dtypes (float64 camera parameters, uint8 images, float64 depth in meters,
float32 cloud positions) and marked read-only so the object can be shared
across workers without copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSelection, NotFound, ValidationError
from .geometry import check_rotation


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass
class CameraView:
    """One calibrated viewpoint: intrinsics, pose, image and depth rasters.

    Attributes:
        view_id: unique identifier within a scene.
        K: 3x3 intrinsic matrix; focal lengths on the diagonal, principal
            point in the last column.
        R: 3x3 world-to-camera rotation.
        T: world origin in camera coordinates, so X_cam = R @ X_world + T.
        image: (H, W, 3) uint8 RGB raster.
        depth: (H, W) float64 depth in meters, camera-frame Z; 0 marks
            invalid pixels.
    """

    view_id: str
    K: np.ndarray
    R: np.ndarray
    T: np.ndarray
    image: np.ndarray
    depth: np.ndarray

    def __post_init__(self) -> None:
        self.K = _freeze(np.asarray(self.K, dtype=np.float64).reshape(3, 3))
        self.R = _freeze(np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        self.T = _freeze(np.asarray(self.T, dtype=np.float64).reshape(3))
        self.image = _freeze(np.asarray(self.image, dtype=np.uint8))
        self.depth = _freeze(np.asarray(self.depth, dtype=np.float64))
        self.validate()

    @property
    def foc(self) -> float:
        return float(self.K[0, 0])

    @property
    def pp(self) -> tuple[float, float]:
        return float(self.K[0, 2]), float(self.K[1, 2])

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    def validate(self) -> None:
        vid = self.view_id
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValidationError(f"view {vid}: image must be HxWx3, got {self.image.shape}")
        if self.depth.shape != self.image.shape[:2]:
            raise ValidationError(
                f"view {vid}: depth {self.depth.shape} does not match image {self.image.shape[:2]}"
            )
        try:
            check_rotation(self.R)
        except ValidationError as exc:
            raise ValidationError(f"view {vid}: {exc}") from None
        foc = self.K[0, 0]
        if not np.isfinite(foc) or foc <= 0:
            raise ValidationError(f"view {vid}: focal length must be > 0, got {foc}")
        if abs(self.K[0, 0] - self.K[1, 1]) > 1e-9 * max(1.0, abs(foc)):
            raise ValidationError(f"view {vid}: K[0,0] and K[1,1] differ")
        if np.abs(self.K[2] - np.array([0.0, 0.0, 1.0])).max() > 1e-9:
            raise ValidationError(f"view {vid}: last row of K must be (0, 0, 1)")
        px, py = self.K[0, 2], self.K[1, 2]
        if not (0 <= px < self.width and 0 <= py < self.height):
            raise ValidationError(
                f"view {vid}: principal point ({px}, {py}) outside [0,{self.width})x[0,{self.height})"
            )
        if not np.isfinite(self.depth).all() or (self.depth < 0).any():
            raise ValidationError(f"view {vid}: depth must be finite and >= 0")


@dataclass
class SegmentedPointCloud:
    """World-space points with per-point segment labels.

    positions are stored as float32 (matching on-disk precision), labels as
    int32, colors optionally as uint8.
    """

    positions: np.ndarray
    labels: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.positions = _freeze(np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3))
        self.labels = _freeze(np.ascontiguousarray(self.labels, dtype=np.int32).reshape(-1))
        if self.colors is not None:
            self.colors = _freeze(np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3))
        n = len(self.positions)
        if n < 1:
            raise ValidationError("point cloud must contain at least one point")
        if not np.isfinite(self.positions).all():
            raise ValidationError("point cloud positions contain NaN or Inf")
        if len(self.labels) != n:
            raise ValidationError(f"labels length {len(self.labels)} != positions length {n}")
        if (self.labels < 0).any():
            raise ValidationError("segment labels must be non-negative")
        if self.colors is not None and len(self.colors) != n:
            raise ValidationError(f"colors length {len(self.colors)} != positions length {n}")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class ObjectPoints:
    """The 3D points of one selected object (float64 for downstream math)."""

    points: np.ndarray
    source_label: int

    def __post_init__(self) -> None:
        self.points = _freeze(np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3))
        if len(self.points) < 3:
            raise DegenerateSelection(
                f"object needs at least 3 points, got {len(self.points)} for label {self.source_label}"
            )

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class SceneMeta:
    name: str = "scene"
    world_unit: str = "meters"


@dataclass
class Scene:
    """An ordered set of calibrated views plus the labeled scene cloud."""

    views: list[CameraView]
    cloud: SegmentedPointCloud
    meta: SceneMeta = field(default_factory=SceneMeta)

    def __post_init__(self) -> None:
        if len(self.views) < 2:
            raise ValidationError(f"a scene needs at least 2 views, got {len(self.views)}")
        ids = [v.view_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate view ids: {ids}")

    def view(self, view_id: str) -> CameraView:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise NotFound(f"view {view_id!r} not in scene (have {[v.view_id for v in self.views]})")

    def labels(self) -> list[int]:
        return sorted(int(x) for x in np.unique(self.cloud.labels))


def select_object(scene: Scene, label: int) -> ObjectPoints:
    """Extract the points of one segment, preserving cloud order.

    Args:
        scene: source scene.
        label: segment identifier to select.

    Returns:
        ObjectPoints with the matching points (cloud order).

    Raises:
        NotFound: label absent from the cloud.
        DegenerateSelection: fewer than 3 points carry the label.
    """
    mask = scene.cloud.labels == int(label)
    count = int(mask.sum())
    if count == 0:
        raise NotFound(f"label {label} not present in scene cloud")
    if count < 3:
        raise DegenerateSelection(f"label {label} has only {count} points, need at least 3")
    return ObjectPoints(points=scene.cloud.positions[mask].astype(np.float64), source_label=int(label))
