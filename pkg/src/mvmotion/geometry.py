"""Pinhole camera math used by the flow engine and the metrics.

All functions are vectorized over leading point dimensions and operate in
float64 unless stated otherwise.  World-to-camera convention:

    X_cam = R @ X_world + T

so ``R`` maps world directions into the camera frame and ``T`` is the world
origin expressed in camera coordinates.  Depth is the camera-frame Z
component, in the same unit as the point cloud (meters for scenes produced
by this package).
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

#: Points closer than this to the camera plane are treated as behind it.
MIN_DEPTH = 1e-6


def world_to_camera(points: np.ndarray, R: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Transform (..., 3) world points into camera coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ np.asarray(R, dtype=np.float64).T + np.asarray(T, dtype=np.float64)


def camera_to_world(points: np.ndarray, R: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Inverse of :func:`world_to_camera` for (..., 3) camera points."""
    pts = np.asarray(points, dtype=np.float64)
    return (pts - np.asarray(T, dtype=np.float64)) @ np.asarray(R, dtype=np.float64)


def project(points_cam: np.ndarray, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points through an intrinsic matrix.

    Args:
        points_cam: (..., 3) camera-frame points.
        K: 3x3 intrinsic matrix with equal focal lengths on the diagonal.

    Returns:
        (uv, z): (..., 2) pixel coordinates and (...,) depths.  Pixels for
        points with z <= MIN_DEPTH are set to NaN; callers decide whether
        that is an error or simply a point to skip.
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    z = pts[..., 2]
    K = np.asarray(K, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K[0, 0] * pts[..., 0] / z + K[0, 2]
        v = K[1, 1] * pts[..., 1] / z + K[1, 2]
    uv = np.stack([u, v], axis=-1)
    uv[z <= MIN_DEPTH] = np.nan
    return uv, z


def backproject(uv: np.ndarray, depth: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Lift pixels with known depth back to camera-frame 3D points.

    Args:
        uv: (..., 2) pixel coordinates.
        depth: (...,) positive depths (camera-frame Z).
        K: 3x3 intrinsic matrix.

    Returns:
        (..., 3) camera-frame points.
    """
    uv = np.asarray(uv, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    x = (uv[..., 0] - K[0, 2]) * d / K[0, 0]
    y = (uv[..., 1] - K[1, 2]) * d / K[1, 1]
    return np.stack([x, y, d], axis=-1)


def check_rotation(R: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ValidationError unless R is orthonormal with determinant +1."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValidationError(f"rotation must be 3x3, got {R.shape}")
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > tol:
        raise ValidationError(f"R not orthonormal (max |R R^T - I| = {err:.3e})")
    det = float(np.linalg.det(R))
    if abs(det - 1.0) > tol:
        raise ValidationError(f"R has determinant {det:.8f}, expected +1")


def rotation_about_z(angle_rad: float) -> np.ndarray:
    """3x3 rotation about the world Z axis (right-handed, radians)."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pure_rotation_homography(K1: np.ndarray, R1: np.ndarray, K2: np.ndarray, R2: np.ndarray) -> np.ndarray:
    """Pixel map from view 2 into view 1 for cameras that share a center.

    With the world-to-camera convention above, a world ray ``d`` seen at
    ``x2 ~ K2 R2 d`` in view 2 appears at ``x1 ~ K1 R1 d`` in view 1, so

        H = K1 @ R1 @ R2.T @ inv(K2)

    maps homogeneous view-2 pixels onto view-1 pixels.
    """
    K1 = np.asarray(K1, dtype=np.float64)
    K2 = np.asarray(K2, dtype=np.float64)
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    return K1 @ R1 @ R2.T @ np.linalg.inv(K2)


def apply_homography(H: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homography to (..., 2) pixel coordinates."""
    uv = np.asarray(uv, dtype=np.float64)
    ones = np.ones(uv.shape[:-1] + (1,), dtype=np.float64)
    homo = np.concatenate([uv, ones], axis=-1) @ np.asarray(H, dtype=np.float64).T
    return homo[..., :2] / homo[..., 2:3]
