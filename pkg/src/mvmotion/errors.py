"""Exception types shared across the package.

Every error raised by the library belongs to one of the classes below so
callers (CLI, HTTP service, tests) can map failures onto exit codes and
status codes without string matching.
"""

from __future__ import annotations


class MvMotionError(Exception):
    """Base class for all library errors."""


class NotFound(MvMotionError):
    """A referenced entity does not exist (file, view id, session, label)."""


class ValidationError(MvMotionError):
    """An input violates a structural or numerical invariant."""


class DegenerateSelection(MvMotionError):
    """An object selection is empty or otherwise unusable."""


class InvalidDepth(MvMotionError):
    """A depth value required by an operation is missing or non-positive."""


class DegenerateFlow(MvMotionError):
    """A flow-derived quantity cannot be computed (e.g. all-zero motion)."""


class InvalidFactor(MvMotionError):
    """A scale factor is out of its legal range or non-finite."""


class DegeneratePlane(MvMotionError):
    """A stretch line defines no usable plane (coincident endpoints)."""


class DegenerateStretch(MvMotionError):
    """Stretch offsets vanish so no direction of maximum motion exists."""


class EmptyProjection(MvMotionError):
    """No object point projects into the target view."""


class FormatError(MvMotionError):
    """A file on disk does not conform to its declared format."""


class InvalidConfig(MvMotionError):
    """A configuration value is out of range or inconsistent."""


class CapabilityError(MvMotionError):
    """A plugged-in component lacks a capability the caller requires."""


class InvalidBatch(MvMotionError):
    """A latent batch has the wrong shape for the requested operation."""


class Timeout(MvMotionError):
    """A wall-clock budget was exhausted before the operation finished."""


class NoOverlap(MvMotionError):
    """Two views share no overlapping pixels under the evaluated mapping."""
