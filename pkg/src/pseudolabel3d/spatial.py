"""Object bank of prior-consistent boxes and distance-aware copy-paste."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import DegenerateRange
from .frustum import GroundPlane
from .geometry import Box3D, _as_points, iou_3d_matrix
from .priors import SizePrior

if TYPE_CHECKING:
    from .scene import Frame

MIN_PLACEMENT_RANGE = 2.0
MAX_PLACEMENT_ATTEMPTS = 10


@dataclass(frozen=True)
class SpatialConfig:
    tau: float = 0.2
    total_range_d: float = 54.0
    placements_per_frame: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.total_range_d <= 0:
            raise ValueError("total range must be positive")


def prior_gate(dims, prior: SizePrior, tau: float) -> bool:
    """True when every dimension is within ``[(1-tau), (1+tau)]`` of the prior."""
    return all(
        (1.0 - tau) * p <= d <= (1.0 + tau) * p for d, p in zip(dims, prior.dims)
    )


def _relative_deviation(dims, prior: SizePrior) -> float:
    return sum(abs(d - p) / p for d, p in zip(dims, prior.dims))


def matches_prior(box: Box3D, priors: Sequence[SizePrior], tau: float = 0.2) -> Optional[str]:
    """Name of the best prior whose gate the box passes, else ``None``.

    Width and length are tried in both orders since an axis-aligned box has
    no heading. Among passing priors the smallest summed relative deviation
    wins.
    """
    if not priors:
        raise ValueError("at least one size prior is required")
    w, l, h = box.size
    best, best_dev = None, math.inf
    for prior in priors:
        for dims in ((w, l, h), (l, w, h)):
            if prior_gate(dims, prior, tau):
                dev = _relative_deviation(dims, prior)
                if dev < best_dev:
                    best, best_dev = prior.class_name, dev
    return best


@dataclass(frozen=True, eq=False)
class BankEntry:
    box: Box3D
    points: np.ndarray  # relative to box.center
    source_frame: str
    original_range: float
    class_name: Optional[str] = None


@dataclass
class ObjectBank:
    entries: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> BankEntry:
        return self.entries[i]


def bank_entry(box: Box3D, points, source_frame: str, class_name: Optional[str] = None) -> BankEntry:
    pts = _as_points(points) if len(points) else np.zeros((0, 3))
    inside = pts[box.contains(pts)] if len(pts) else pts
    half = np.asarray(box.size) / 2.0
    rel = np.clip(inside - np.asarray(box.center), -half, half)
    return BankEntry(box, rel, source_frame, box.horizontal_range, class_name)


def build_object_bank(
    frames: Sequence["Frame"],
    boxes_per_frame: Sequence[Sequence[Box3D]],
    priors: Sequence[SizePrior],
    cfg: SpatialConfig = SpatialConfig(),
) -> ObjectBank:
    if len(frames) != len(boxes_per_frame):
        raise ValueError("boxes_per_frame must align with frames")
    bank = ObjectBank()
    for frame, boxes in zip(frames, boxes_per_frame):
        pts = np.asarray(frame.points, dtype=np.float64)
        for box in boxes:
            name = matches_prior(box, priors, cfg.tau)
            if name is not None:
                bank.entries.append(bank_entry(box, pts, frame.frame_id, name))
    return bank


def sampling_ratio(d_total: float, d_ori: float, d_new: float) -> float:
    """Fraction of an object's points kept when moving it from ``d_ori`` to ``d_new``."""
    if d_ori >= d_total:
        raise DegenerateRange(f"original range {d_ori} is not inside total range {d_total}")
    return max(0.0, min(1.0, (d_total - d_new) / (d_total - d_ori)))


def kept_count(ratio: float, n: int) -> int:
    # round first so that e.g. 0.5 * 100 never becomes 51 through float noise
    return int(math.ceil(round(ratio * n, 9)))


def place_objects(
    frame_boxes: Sequence[Box3D],
    frame_points,
    bank: ObjectBank,
    cfg: SpatialConfig = SpatialConfig(),
    ground: Optional[GroundPlane] = None,
    frame_index: int = 0,
) -> tuple[list[Box3D], np.ndarray]:
    """Paste bank objects into a frame at random ranges and azimuths.

    Returns the frame's boxes with placed boxes appended and the point cloud
    with the subsampled object points appended.
    """
    boxes = list(frame_boxes)
    base = np.asarray(frame_points, dtype=np.float64).reshape(-1, 3)
    if len(bank) == 0 or cfg.placements_per_frame <= 0:
        return boxes, base

    rng = np.random.default_rng(cfg.rng_seed ^ frame_index)
    added = []
    for _ in range(cfg.placements_per_frame):
        entry = bank[int(rng.integers(len(bank)))]
        if entry.original_range >= cfg.total_range_d:
            continue
        placed = None
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            d_new = rng.uniform(MIN_PLACEMENT_RANGE, cfg.total_range_d)
            azimuth = rng.uniform(0.0, 2.0 * math.pi)
            x, y = d_new * math.cos(azimuth), d_new * math.sin(azimuth)
            if ground is not None:
                z = ground.height_at(x, y) + entry.box.size[2] / 2.0
            else:
                z = entry.box.center[2]
            candidate = entry.box.replace(center=(x, y, z))
            if not boxes or not np.any(iou_3d_matrix([candidate], boxes) > 0.0):
                placed = candidate
                break
        if placed is None:
            continue
        ratio = sampling_ratio(cfg.total_range_d, entry.original_range, placed.horizontal_range)
        n = len(entry.points)
        keep = rng.permutation(n)[: kept_count(ratio, n)]
        boxes.append(placed)
        added.append(entry.points[keep] + np.asarray(placed.center))

    points = np.concatenate([base] + added) if added else base
    return boxes, points
