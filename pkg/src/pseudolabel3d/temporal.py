"""Cross-frame box correlation: recover missed detections, widen distant boxes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Box3D, RigidTransform, compose, envelope, invert, iou_3d_matrix


@dataclass(frozen=True)
class EgoPose:
    timestamp: float
    ego_to_global: RigidTransform = field(default_factory=RigidTransform)
    lidar_to_ego: RigidTransform = field(default_factory=RigidTransform)

    def lidar_to_global(self) -> RigidTransform:
        return compose(self.ego_to_global, self.lidar_to_ego)


@dataclass(frozen=True)
class TemporalConfig:
    zero_iou_eps: float = 1e-6
    far_distance: float = 30.0
    nms_iou: float = 0.5


def frame_to_frame(src: EgoPose, dst: EgoPose) -> RigidTransform:
    """LiDAR(src) -> ego(src) -> global -> ego(dst) -> LiDAR(dst)."""
    chain = src.lidar_to_ego
    chain = compose(src.ego_to_global, chain)
    chain = compose(invert(dst.ego_to_global), chain)
    return compose(invert(dst.lidar_to_ego), chain)


def transform_box(box: Box3D, transform: RigidTransform) -> Box3D:
    """Map a box through ``transform`` and re-align it to the axes.

    The result is the envelope of the eight transformed corners, so it never
    shrinks; pure translations (and quarter turns about z) keep the volume.
    """
    if np.array_equal(transform.rotation, np.eye(3)):
        center = np.asarray(box.center) + transform.translation
        return Box3D(tuple(center), box.size, box.score, box.class_id)
    corners = transform.apply(box.corners())
    return Box3D.from_bounds(corners.min(axis=0), corners.max(axis=0), box.score, box.class_id)


def project_box_between_frames(box: Box3D, src: EgoPose, dst: EgoPose) -> Box3D:
    return transform_box(box, frame_to_frame(src, dst))


def build_overlap_matrix(projected: Sequence[Box3D], current: Sequence[Box3D]) -> np.ndarray:
    """``M[i, j] = IoU(projected[i], current[j])``."""
    return iou_3d_matrix(projected, current)


def _suppress_swallowed(boxes: list[Optional[Box3D]], envelopes: set[int], nms_iou: float) -> None:
    # NMS against merged envelopes: a box largely covered by (and contained in)
    # an envelope is dropped and its score folded into the envelope.
    for e in sorted(envelopes, key=lambda i: (-boxes[i].score, i)):
        env = boxes[e]
        if env is None:
            continue
        others = [i for i, b in enumerate(boxes) if b is not None and i != e]
        if not others:
            continue
        ious = iou_3d_matrix([env], [boxes[i] for i in others])[0]
        for i, iou in zip(others, ious):
            if iou > nms_iou and env.contains_box(boxes[i], tol=1e-9):
                if boxes[i].score > env.score:
                    env = env.replace(score=boxes[i].score)
                boxes[i] = None
        boxes[e] = env


def temporal_update(
    current: Sequence[Box3D],
    neighbor: Sequence[Box3D],
    cur_pose: EgoPose,
    nbr_pose: EgoPose,
    cfg: TemporalConfig = TemporalConfig(),
) -> list[Box3D]:
    """Fold one neighbouring frame's boxes into the current frame.

    Neighbour boxes that land on empty space are appended (missed detections);
    neighbour boxes overlapping a current box beyond ``far_distance`` replace
    it with the union envelope. Output keeps current boxes first, in their
    original order, then recovered boxes in neighbour order.
    """
    result: list[Optional[Box3D]] = list(current)
    if not neighbor:
        return list(current)
    transform = frame_to_frame(nbr_pose, cur_pose)
    projected = [transform_box(b, transform) for b in neighbor]
    overlap = build_overlap_matrix(projected, current)

    recovered = []
    merged: set[int] = set()
    for i, box in enumerate(projected):
        row = overlap[i] if overlap.shape[1] else np.zeros(0)
        if row.size == 0 or row.max() <= cfg.zero_iou_eps:
            recovered.append(box)
        elif box.horizontal_range > cfg.far_distance:
            j = int(np.argmax(row))
            result[j] = envelope(result[j], box)
            merged.add(j)

    result.extend(recovered)
    if merged:
        _suppress_swallowed(result, merged, cfg.nms_iou)
    return [b for b in result if b is not None]


def temporal_update_bidirectional(
    current: Sequence[Box3D],
    prev: Optional[Sequence[Box3D]],
    next_: Optional[Sequence[Box3D]],
    poses: tuple,
    cfg: TemporalConfig = TemporalConfig(),
) -> list[Box3D]:
    """Apply the next-frame update, then the previous-frame update.

    ``poses`` is ``(prev_pose, cur_pose, next_pose)``; a missing neighbour
    is given as ``None`` (both its boxes and its pose).
    """
    prev_pose, cur_pose, next_pose = poses
    out = list(current)
    if next_ is not None and next_pose is not None:
        out = temporal_update(out, next_, cur_pose, next_pose, cfg)
    if prev is not None and prev_pose is not None:
        out = temporal_update(out, prev, cur_pose, prev_pose, cfg)
    return out
