"""End-to-end run over a scene: lift, temporal refinement, optional augmentation, labels, metrics."""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InsufficientPoints, NoHorizontalPlane, PseudoLabelError
from .frustum import LiftConfig, fit_ground_plane, lift_frame, merge_overlapping
from .geometry import Box3D
from .metrics import EvalConfig, EvalReport, evaluate, label_accuracy
from .scene import Frame, Scene, box3d_doc, labeled_box_doc
from .semantics import LabelConfig, LabeledBox, label_frame
from .spatial import ObjectBank, SpatialConfig, build_object_bank, place_objects
from .temporal import TemporalConfig, temporal_update_bidirectional

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    lift: LiftConfig = field(default_factory=LiftConfig)
    merge_views: bool = True
    merge_iou: float = 0.0
    temporal_enabled: bool = True
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    spatial_enabled: bool = False
    spatial: SpatialConfig = field(default_factory=SpatialConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    label_match_threshold: float = 2.0


def _build(cls, doc: dict):
    kwargs = {}
    hints = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in doc.items():
        if key not in hints:
            raise ValueError(f"unknown {cls.__name__} option {key!r}")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default) and isinstance(value, dict):
            value = _build(type(default), value)
        elif isinstance(default, tuple) and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from nested option dictionaries."""
    return _build(PipelineConfig, doc)


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


@dataclass
class PipelineResult:
    lifted: list
    merged: list
    temporal: list
    final: Optional[list]
    features3d: list
    labels: list
    report: Optional[EvalReport]
    label_accuracy: Optional[float] = None
    n_label_matches: int = 0
    bank_size: int = 0


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _frame_lift_config(cfg: PipelineConfig, index: int) -> LiftConfig:
    ransac = dataclasses.replace(cfg.lift.ransac, seed=cfg.seed ^ index)
    return dataclasses.replace(cfg.lift, ransac=ransac)


def lift_scene(scene: Scene, cfg: PipelineConfig, threads: int = 1) -> tuple[list, list]:
    def one(i):
        frame = scene.frames[i]
        try:
            raw = lift_frame(frame, _frame_lift_config(cfg, i))
        except PseudoLabelError as exc:
            raise type(exc)(f"frame {frame.frame_id}: {exc}") from exc
        merged = merge_overlapping(raw, cfg.merge_iou) if cfg.merge_views else list(raw)
        return raw, merged

    out = _pmap(one, range(len(scene.frames)), threads)
    return [r for r, _ in out], [m for _, m in out]


def temporal_scene(scene: Scene, boxes: Sequence[Sequence[Box3D]], cfg: PipelineConfig, threads: int = 1) -> list:
    """Bidirectional update of every frame from its neighbours' pre-update boxes."""
    frames = scene.frames

    def one(i):
        prev = boxes[i - 1] if i > 0 else None
        nxt = boxes[i + 1] if i + 1 < len(frames) else None
        poses = (
            frames[i - 1].ego_pose if i > 0 else None,
            frames[i].ego_pose,
            frames[i + 1].ego_pose if i + 1 < len(frames) else None,
        )
        return temporal_update_bidirectional(boxes[i], prev, nxt, poses, cfg.temporal)

    return _pmap(one, range(len(frames)), threads)


def augment_scene(
    scene: Scene, boxes: Sequence[Sequence[Box3D]], cfg: PipelineConfig, threads: int = 1
) -> tuple[list, list, ObjectBank]:
    """Object bank over the whole scene, then per-frame placement."""
    bank = build_object_bank(scene.frames, boxes, scene.priors, cfg.spatial)

    def one(i):
        frame = scene.frames[i]
        try:
            plane = fit_ground_plane(frame.points, _frame_lift_config(cfg, i).ransac)
        except (InsufficientPoints, NoHorizontalPlane):
            plane = None
        return place_objects(boxes[i], frame.points, bank, cfg.spatial, plane, frame_index=i)

    out = _pmap(one, range(len(scene.frames)), threads)
    return [b for b, _ in out], [p for _, p in out], bank


def box_features(frame: Frame, boxes: Sequence[Box3D]) -> list:
    """Mean per-point 3D embedding inside each box; ``None`` where no point carries one."""
    if frame.point_feature_ids is None or frame.features3d is None:
        return [None] * len(boxes)
    ids = frame.point_feature_ids
    valid = ids >= 0
    pts = np.asarray(frame.points, dtype=np.float64)[valid]
    feats = np.asarray(frame.features3d, dtype=np.float64)[ids[valid]]
    out = []
    for box in boxes:
        inside = box.contains(pts)
        out.append(feats[inside].mean(axis=0) if inside.any() else None)
    return out


def label_scene(scene: Scene, boxes: Sequence[Sequence[Box3D]], cfg: PipelineConfig, threads: int = 1):
    def one(i):
        frame = scene.frames[i]
        feats = box_features(frame, boxes[i])
        return feats, label_frame(boxes[i], feats, frame, scene.catalog, scene.priors, cfg.labels)

    out = _pmap(one, range(len(scene.frames)), threads)
    return [f for f, _ in out], [l for _, l in out]


def has_ground_truth(scene: Scene) -> bool:
    return bool(scene.frames) and all(f.gt_boxes is not None for f in scene.frames)


def run_pipeline(scene: Scene, cfg: PipelineConfig = PipelineConfig(), threads: int = 1) -> PipelineResult:
    lifted, merged = lift_scene(scene, cfg, threads)
    refined = temporal_scene(scene, merged, cfg, threads) if cfg.temporal_enabled else [list(b) for b in merged]
    final, bank_size = None, 0
    if cfg.spatial_enabled:
        final, _, bank = augment_scene(scene, refined, cfg, threads)
        bank_size = len(bank)
    feats, labels = label_scene(scene, refined, cfg, threads)

    report, acc, n_acc = None, None, 0
    if has_ground_truth(scene):
        gts = [f.gt_boxes for f in scene.frames]
        report = evaluate(labels, gts, cfg.eval)
        acc, n_acc = label_accuracy(labels, gts, cfg.label_match_threshold)
    return PipelineResult(lifted, merged, refined, final, feats, labels, report, acc, n_acc, bank_size)


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def boxes_document(scene: Scene, boxes: Sequence[Sequence[Box3D]], stage: str) -> dict:
    return {
        "stage": stage,
        "scene_id": scene.scene_id,
        "frames": [
            {"frame_id": f.frame_id, "boxes": [box3d_doc(b) for b in bs]}
            for f, bs in zip(scene.frames, boxes)
        ],
    }


def labels_document(scene: Scene, labels: Sequence[Sequence[LabeledBox]]) -> dict:
    return {
        "stage": "labels",
        "scene_id": scene.scene_id,
        "frames": [
            {"frame_id": f.frame_id, "labels": [labeled_box_doc(b) for b in ls]}
            for f, ls in zip(scene.frames, labels)
        ],
    }


def write_outputs(scene: Scene, result: PipelineResult, out_dir) -> list[Path]:
    """Write every stage's output; returns the written paths in a fixed order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(name, doc):
        path = out / name
        _dump(path, doc)
        written.append(path)

    dump("boxes_lift.json", boxes_document(scene, result.lifted, "lift"))
    dump("boxes_merged.json", boxes_document(scene, result.merged, "merged"))
    dump("boxes_temporal.json", boxes_document(scene, result.temporal, "temporal"))
    if result.final is not None:
        dump("boxes_final.json", boxes_document(scene, result.final, "spatial"))
    dump("labels.json", labels_document(scene, result.labels))
    if result.report is not None:
        path = out / "report.json"
        doc = result.report.to_dict()
        doc["label_accuracy"] = {"value": result.label_accuracy, "n_matched": result.n_label_matches}
        _dump(path, doc)
        written.append(path)
        table = out / "report.csv"
        table.write_text(result.report.to_table())
        written.append(table)
    return written
