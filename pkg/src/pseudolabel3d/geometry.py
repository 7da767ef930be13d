"""Frames, projections, rigid transforms and axis-aligned box overlap.

Point clouds are plain ``(N, 3)`` float arrays in the LiDAR frame; a point's
index is its row, and every filtering routine returns row indices so that
callers can always refer back to the original sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

ORTHO_TOL = 1e-9


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation followed by translation: ``p' = R @ p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation of ``yaw`` radians about +z, then ``translation``."""
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, atol=atol, rtol=0) and np.allclose(
            self.translation, other.translation, atol=atol, rtol=0
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return the transform that applies ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt.copy(), -(rt @ t.translation))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValueError("image dimensions must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Box2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0
    class_id: Optional[int] = None
    feature_id: Optional[int] = None

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate 2D box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains_pixels(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return (u >= self.x_min) & (u <= self.x_max) & (v >= self.y_min) & (v <= self.y_max)


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned box: ``size = (w, l, h)`` along (x, y, z) of the LiDAR frame."""

    center: tuple
    size: tuple
    score: float = 1.0
    class_id: Optional[int] = None

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size need three components")
        if not all(math.isfinite(v) for v in center + size):
            raise ValueError("box parameters must be finite")
        if not all(s > 0 for s in size):
            raise ValueError(f"box size must be positive, got {size}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)

    @classmethod
    def from_bounds(cls, lo, hi, score: float = 1.0, class_id: Optional[int] = None) -> "Box3D":
        """Box covering ``[lo, hi]``; the size is widened by a few ulps if rounding
        of ``center +/- size / 2`` would otherwise cut off an extreme."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        center = (lo + hi) / 2.0
        size = hi - lo
        for _ in range(8):
            short = (center - size / 2.0 > lo) | (center + size / 2.0 < hi)
            if not short.any():
                break
            size = np.where(short, np.nextafter(size, np.inf), size)
        return cls(tuple(center), tuple(size), score, class_id)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.size) / 2.0

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.size) / 2.0

    @property
    def volume(self) -> float:
        w, l, h = self.size
        return w * l * h

    @property
    def horizontal_range(self) -> float:
        return math.hypot(self.center[0], self.center[1])

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        )

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        pts = _as_points(points)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def contains_box(self, other: "Box3D", tol: float = 0.0) -> bool:
        return bool(np.all(self.lo <= other.lo + tol) and np.all(self.hi >= other.hi - tol))

    def replace(self, **changes) -> "Box3D":
        return replace(self, **changes)


def envelope(a: Box3D, b: Box3D, score: Optional[float] = None) -> Box3D:
    """Smallest axis-aligned box containing both ``a`` and ``b``."""
    if score is None:
        score = max(a.score, b.score)
    return Box3D.from_bounds(
        np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi), score=score, class_id=a.class_id
    )


def aabb_of_points(points) -> Box3D:
    pts = _as_points(points)
    return Box3D.from_bounds(pts.min(axis=0), pts.max(axis=0))


def box_bounds(boxes: Sequence[Box3D]) -> tuple[np.ndarray, np.ndarray]:
    if len(boxes) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    centers = np.array([b.center for b in boxes])
    halves = np.array([b.size for b in boxes]) / 2.0
    return centers - halves, centers + halves


def iou_3d_matrix(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(boxes_a), len(boxes_b))``."""
    lo_a, hi_a = box_bounds(boxes_a)
    lo_b, hi_b = box_bounds(boxes_b)
    return _iou_from_bounds(lo_a, hi_a, lo_b, hi_b)


def _iou_from_bounds(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    if len(lo_a) == 0 or len(lo_b) == 0:
        return np.zeros((len(lo_a), len(lo_b)))
    overlap = np.minimum(hi_a[:, None, :], hi_b[None, :, :]) - np.maximum(
        lo_a[:, None, :], lo_b[None, :, :]
    )
    overlap = np.clip(overlap, 0.0, None)
    inter = overlap[..., 0] * overlap[..., 1] * overlap[..., 2]
    ext_a = hi_a - lo_a
    ext_b = hi_b - lo_b
    vol_a = ext_a[:, 0] * ext_a[:, 1] * ext_a[:, 2]
    vol_b = ext_b[:, 0] * ext_b[:, 1] * ext_b[:, 2]
    union = vol_a[:, None] + vol_b[None, :] - inter
    return np.where(inter > 0.0, inter / union, 0.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    return float(iou_3d_matrix([a], [b])[0, 0])


def iou_2d(a: Box2D, b: Box2D) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


class Projection(NamedTuple):
    indices: np.ndarray
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray


def project_points(points, extrinsic: RigidTransform, intrinsics: CameraIntrinsics) -> Projection:
    """Pinhole projection of LiDAR points into one camera.

    ``extrinsic`` maps the LiDAR frame into the camera frame (x right, y down,
    z forward). Only points in front of the camera whose pixel falls inside
    the closed image rectangle are returned.
    """
    pts = _as_points(points)
    cam = extrinsic.apply(pts)
    depth = cam[:, 2]
    front = depth > 0.0
    idx = np.flatnonzero(front)
    z = depth[idx]
    u = intrinsics.fx * (cam[idx, 0] / z) + intrinsics.cx
    v = intrinsics.fy * (cam[idx, 1] / z) + intrinsics.cy
    inside = (u >= 0.0) & (u <= intrinsics.image_width) & (v >= 0.0) & (v <= intrinsics.image_height)
    return Projection(idx[inside], u[inside], v[inside], z[inside])
