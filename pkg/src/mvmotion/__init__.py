"""Multi-view motion editing: flow authoring, kinematics, guided sampling.

The package turns a user motion gesture on one view of a captured indoor
scene into dense optical flow for every view, then uses those flows to
guide a diffusion-style sampler that re-renders the edit consistently
across views, and finally scores the result.
"""

from .errors import (
    CapabilityError,
    DegenerateFlow,
    DegeneratePlane,
    DegenerateSelection,
    DegenerateStretch,
    EmptyProjection,
    FormatError,
    InvalidBatch,
    InvalidConfig,
    InvalidDepth,
    InvalidFactor,
    MvMotionError,
    NoOverlap,
    NotFound,
    Timeout,
    ValidationError,
)
from .flow import FlowField, OcclusionMask
from .scene import CameraView, ObjectPoints, Scene, SceneMeta, SegmentedPointCloud, select_object

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "CapabilityError",
    "DegenerateFlow",
    "DegeneratePlane",
    "DegenerateSelection",
    "DegenerateStretch",
    "EmptyProjection",
    "FlowField",
    "FormatError",
    "InvalidBatch",
    "InvalidConfig",
    "InvalidDepth",
    "InvalidFactor",
    "MvMotionError",
    "NoOverlap",
    "NotFound",
    "ObjectPoints",
    "OcclusionMask",
    "Scene",
    "SceneMeta",
    "SegmentedPointCloud",
    "Timeout",
    "ValidationError",
    "__version__",
    "select_object",
]
