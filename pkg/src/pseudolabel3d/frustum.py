"""Lift per-camera 2D detections into axis-aligned 3D boxes.

Pipeline per detection: ground removal (RANSAC plane), frustum membership
(optionally intersected with a segmentation mask), Euclidean region growing,
densest cluster, extremal box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyInput, InsufficientPoints, NoHorizontalPlane
from .geometry import (
    Box2D,
    Box3D,
    CameraIntrinsics,
    Projection,
    RigidTransform,
    _as_points,
    envelope,
    iou_3d_matrix,
    project_points,
)

if TYPE_CHECKING:
    from .scene import Frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 256
    inlier_threshold: float = 0.1
    max_tilt_deg: float = 15.0
    seed: int = 0


@dataclass(frozen=True)
class LiftConfig:
    ransac: RansacConfig = field(default_factory=RansacConfig)
    ground_margin: float = 0.2
    epsilon: float = 0.5
    min_cluster: int = 5
    min_extent: float = 0.1
    use_masks: bool = True


@dataclass(frozen=True)
class GroundPlane:
    """Plane ``normal . p + offset = 0`` with the normal pointing up."""

    normal: tuple
    offset: float
    inlier_count: int = 0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("ground normal must be unit length")
        if n[2] <= 0:
            raise ValueError("ground normal must point upward")
        object.__setattr__(self, "normal", tuple(float(x) for x in n))

    def signed_height(self, points) -> np.ndarray:
        return _as_points(points) @ np.asarray(self.normal) + self.offset

    def height_at(self, x: float, y: float) -> float:
        """z coordinate of the plane above/below (x, y)."""
        nx, ny, nz = self.normal
        return -(nx * x + ny * y + self.offset) / nz

    @property
    def tilt_deg(self) -> float:
        return math.degrees(math.acos(min(1.0, self.normal[2])))


@dataclass(frozen=True, eq=False)
class SegMask:
    """Binary instance mask for one 2D box, row-major at image resolution."""

    camera_id: str
    box_id: int
    bitmap: np.ndarray

    def __post_init__(self):
        bm = np.array(self.bitmap, dtype=bool)
        if bm.ndim != 2:
            raise ValueError("mask bitmap must be 2D")
        bm.flags.writeable = False
        object.__setattr__(self, "bitmap", bm)

    @property
    def height(self) -> int:
        return self.bitmap.shape[0]

    @property
    def width(self) -> int:
        return self.bitmap.shape[1]

    def lookup(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        # closed image rectangle: u == width maps onto the last column
        cols = np.clip(np.floor(u).astype(np.int64), 0, self.width - 1)
        rows = np.clip(np.floor(v).astype(np.int64), 0, self.height - 1)
        return self.bitmap[rows, cols]

    def to_rle(self) -> list[int]:
        return rle_encode(self.bitmap)

    @classmethod
    def from_rle(cls, camera_id: str, box_id: int, height: int, width: int, counts) -> "SegMask":
        return cls(camera_id, box_id, rle_decode(counts, height, width))

    def __eq__(self, other):
        if not isinstance(other, SegMask):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.box_id == other.box_id
            and np.array_equal(self.bitmap, other.bitmap)
        )


def rle_encode(bitmap: np.ndarray) -> list[int]:
    """Alternating run lengths over the row-major flattening, starting with a False run."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(counts: Sequence[int], height: int, width: int) -> np.ndarray:
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) != height * width:
        raise ValueError("run lengths do not cover the mask")
    values = np.arange(len(counts)) % 2 == 1
    return np.repeat(values, counts).reshape(height, width)


def fit_ground_plane(points, cfg: RansacConfig = RansacConfig()) -> GroundPlane:
    pts = _as_points(points)
    n = len(pts)
    if n < 3:
        raise InsufficientPoints(f"RANSAC needs at least 3 points, got {n}")
    rng = np.random.default_rng(cfg.seed)
    samples = np.stack([rng.choice(n, size=3, replace=False) for _ in range(cfg.iterations)])

    p0, p1, p2 = pts[samples[:, 0]], pts[samples[:, 1]], pts[samples[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)

    best_count, best_mask = -1, None
    for k in range(cfg.iterations):
        if norms[k] < 1e-12:
            continue
        normal = normals[k] / norms[k]
        offset = -normal @ p0[k]
        mask = np.abs(pts @ normal + offset) <= cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
    if best_mask is None:
        raise NoHorizontalPlane("all RANSAC samples were degenerate")

    inliers = pts[best_mask]
    centroid = inliers.mean(axis=0)
    _, _, vt = np.linalg.svd(inliers - centroid, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    tilt = math.degrees(math.acos(min(1.0, abs(normal[2]))))
    if normal[2] <= 0 or tilt > cfg.max_tilt_deg:
        raise NoHorizontalPlane(f"best plane tilted {tilt:.1f} deg from vertical")
    return GroundPlane(tuple(normal), float(-normal @ centroid), best_count)


def remove_ground(points, plane: GroundPlane, margin: float = 0.2, indices=None) -> np.ndarray:
    """Indices of points strictly higher than ``margin`` above the plane."""
    pts = _as_points(points)
    idx = np.arange(len(pts)) if indices is None else np.asarray(indices, dtype=np.int64)
    if len(idx) == 0:
        return idx
    height = plane.signed_height(pts[idx])
    return idx[height > margin]


def _frustum_from_projection(proj: Projection, box: Box2D, mask: Optional[SegMask]) -> np.ndarray:
    inside = box.contains_pixels(proj.u, proj.v)
    if mask is not None:
        inside &= mask.lookup(proj.u, proj.v)
    return np.sort(proj.indices[inside])


def frustum_points(
    points,
    box: Box2D,
    mask: Optional[SegMask],
    extrinsic: RigidTransform,
    intrinsics: CameraIntrinsics,
    indices=None,
) -> np.ndarray:
    """Indices of points whose projection lands inside ``box`` (and ``mask``)."""
    pts = _as_points(points)
    idx = np.arange(len(pts)) if indices is None else np.asarray(indices, dtype=np.int64)
    proj = project_points(pts[idx], extrinsic, intrinsics)
    proj = Projection(idx[proj.indices], proj.u, proj.v, proj.depth)
    return _frustum_from_projection(proj, box, mask)


def region_grow(points, seed_set, epsilon: float = 0.5, min_cluster: int = 5) -> list[np.ndarray]:
    """Connected components of the epsilon-neighbourhood graph over ``seed_set``.

    Returns sorted index arrays, ordered by their smallest index; components
    with fewer than ``min_cluster`` points are dropped.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    pts = _as_points(points)
    seeds = np.unique(np.asarray(seed_set, dtype=np.int64))
    if len(seeds) == 0:
        return []
    sub = pts[seeds]
    pairs = cKDTree(sub).query_pairs(epsilon, output_type="ndarray")
    n = len(seeds)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)

    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    clusters = [seeds[grp] for grp in np.split(order, splits)]
    clusters = [c for c in clusters if len(c) >= min_cluster]
    clusters.sort(key=lambda c: c[0])
    return clusters


def densest_cluster(clusters: Sequence[np.ndarray]) -> np.ndarray:
    if len(clusters) == 0:
        raise EmptyInput("no clusters to choose from")
    return min(clusters, key=lambda c: (-len(c), int(np.min(c))))


def estimate_box(cluster, points, min_extent: float = 0.1, score: float = 1.0) -> Box3D:
    """Extremal axis-aligned box over the cluster points."""
    idx = np.asarray(cluster, dtype=np.int64)
    if len(idx) == 0:
        raise EmptyInput("cannot fit a box to an empty cluster")
    sub = _as_points(points)[idx]
    lo, hi = sub.min(axis=0), sub.max(axis=0)
    flat = hi - lo <= 0.0
    box = Box3D.from_bounds(lo, np.where(flat, lo + 1.0, hi), score=score)
    # zero extents: centred on the shared coordinate, exactly min_extent wide
    center = np.where(flat, lo, box.center)
    size = np.where(flat, min_extent, box.size)
    return Box3D(tuple(center), tuple(size), score=score)


def lift_frame(frame: "Frame", cfg: LiftConfig = LiftConfig()) -> list[Box3D]:
    """Initial 3D boxes for one sweep, aggregated over all cameras.

    Output is ordered by (camera_id, detection index); detections whose
    frustum yields no usable cluster are skipped.
    """
    pts = np.asarray(frame.points, dtype=np.float64)
    if not frame.cameras:
        raise ValueError(f"frame {frame.frame_id} has no cameras")
    if not any(frame.detections2d.get(cam.camera_id) for cam in frame.cameras):
        return []

    try:
        plane = fit_ground_plane(pts, cfg.ransac)
        keep = remove_ground(pts, plane, cfg.ground_margin)
    except (InsufficientPoints, NoHorizontalPlane) as exc:
        log.warning("frame %s: no ground plane (%s); clustering raw points", frame.frame_id, exc)
        keep = np.arange(len(pts))

    masks = {(m.camera_id, m.box_id): m for m in frame.masks} if cfg.use_masks else {}
    boxes = []
    for cam in sorted(frame.cameras, key=lambda c: c.camera_id):
        dets = frame.detections2d.get(cam.camera_id, [])
        if not dets:
            continue
        proj = project_points(pts[keep], cam.lidar_to_camera, cam.intrinsics)
        proj = Projection(keep[proj.indices], proj.u, proj.v, proj.depth)
        for k, det in enumerate(dets):
            members = _frustum_from_projection(proj, det, masks.get((cam.camera_id, k)))
            clusters = region_grow(pts, members, cfg.epsilon, cfg.min_cluster)
            if not clusters:
                continue
            best = densest_cluster(clusters)
            boxes.append(estimate_box(best, pts, cfg.min_extent, score=det.score))
    return boxes


def merge_overlapping(boxes: Sequence[Box3D], iou_threshold: float = 0.0) -> list[Box3D]:
    """Replace every group of mutually overlapping boxes by its envelope.

    Groups are connected components of the ``IoU > iou_threshold`` graph,
    repeated until no two envelopes overlap. Used to fuse partial views of an
    object seen by adjacent cameras.
    """
    current = list(boxes)
    while len(current) > 1:
        iou = iou_3d_matrix(current, current)
        np.fill_diagonal(iou, 0.0)
        adjacency = iou > iou_threshold
        if not adjacency.any():
            break
        n_comp, labels = connected_components(adjacency, directed=False)
        merged = []
        for comp in range(n_comp):
            members = np.flatnonzero(labels == comp)
            box = current[members[0]]
            for m in members[1:]:
                box = envelope(box, current[m])
            merged.append((members[0], box))
        merged.sort(key=lambda item: item[0])
        current = [b for _, b in merged]
    return current
