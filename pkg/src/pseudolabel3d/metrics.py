"""Center-distance AP/AR with distance-band and size-group summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NoGroundTruth
from .semantics import LabeledBox

RECALL_POINTS = 101

DEFAULT_BANDS = (("near", 0.0, 18.0), ("midrange", 0.0, 34.0), ("far", 0.0, 54.0))
DEFAULT_SIZE_GROUPS = (
    ("large", ("car", "truck", "construction_vehicle", "bus", "trailer")),
    ("medium", ("barrier", "bicycle", "motorcycle")),
    ("small", ("pedestrian", "traffic_cone")),
)


@dataclass(frozen=True)
class EvalConfig:
    dist_thresholds: tuple = (0.5, 1.0, 2.0, 4.0)
    bands: tuple = DEFAULT_BANDS
    size_groups: tuple = DEFAULT_SIZE_GROUPS
    truncated_ap: bool = False
    min_recall: float = 0.1
    min_precision: float = 0.1

    def __post_init__(self):
        th = [float(t) for t in self.dist_thresholds]
        if not th or th[0] <= 0 or any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("distance thresholds must be positive and strictly increasing")
        object.__setattr__(self, "dist_thresholds", tuple(th))
        seen = set()
        for _, classes in self.size_groups:
            for c in classes:
                if c in seen:
                    raise ValueError(f"class {c} appears in more than one size group")
                seen.add(c)

    def group_of(self, class_name: str) -> Optional[str]:
        for name, classes in self.size_groups:
            if class_name in classes:
                return name
        return None


def _hdist(a: LabeledBox, b: LabeledBox) -> float:
    return math.hypot(a.box.center[0] - b.box.center[0], a.box.center[1] - b.box.center[1])


def _match(preds, gts, threshold, pred_frames=None, gt_frames=None) -> list[Optional[int]]:
    pred_frames = [0] * len(preds) if pred_frames is None else list(pred_frames)
    gt_frames = [0] * len(gts) if gt_frames is None else list(gt_frames)
    by_frame: dict = {}
    for g, f in enumerate(gt_frames):
        by_frame.setdefault(f, []).append(g)
    taken = set()
    out = []
    for p, pred in enumerate(preds):
        best, best_d = None, math.inf
        for g in by_frame.get(pred_frames[p], ()):
            if g in taken:
                continue
            d = _hdist(pred, gts[g])
            if d <= threshold and d < best_d:
                best, best_d = g, d
        if best is not None:
            taken.add(best)
        out.append(best)
    return out


def greedy_match(
    preds: Sequence[LabeledBox],
    gts: Sequence[LabeledBox],
    threshold: float,
    pred_frames=None,
    gt_frames=None,
) -> list[tuple[int, bool]]:
    """Match confidence-sorted predictions to the nearest free GT within ``threshold``.

    With ``pred_frames``/``gt_frames`` given, matching only happens inside a frame.
    """
    assigned = _match(preds, gts, threshold, pred_frames, gt_frames)
    return [(i, g is not None) for i, g in enumerate(assigned)]


def _flags(matches) -> np.ndarray:
    return np.array([m[1] if isinstance(m, tuple) else bool(m) for m in matches], dtype=bool)


def precision_envelope(matches, n_gt: int) -> np.ndarray:
    """Max precision at recall >= k/100 for k = 0..100 (0 where unreachable)."""
    tp_flags = _flags(matches)
    env = np.zeros(RECALL_POINTS)
    if n_gt == 0 or len(tp_flags) == 0:
        return env
    tp = np.cumsum(tp_flags)
    precision = tp / np.arange(1, len(tp) + 1)
    # suffix max: best precision achievable at this rank or deeper
    best_from = np.maximum.accumulate(precision[::-1])[::-1]
    k = np.arange(RECALL_POINTS)
    # first rank whose recall tp/n_gt reaches k/100, compared in integers
    first = np.searchsorted(tp * 100, k * n_gt, side="left")
    ok = first < len(tp)
    env[ok] = best_from[first[ok]]
    return env


def average_precision(
    matches, n_gt: int, truncated: bool = False, min_recall: float = 0.1, min_precision: float = 0.1
) -> float:
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0:
        return 0.0
    env = precision_envelope(matches, n_gt)
    if not truncated:
        return float(env.mean())
    tail = env[int(round(100 * min_recall)) + 1 :] - min_precision
    return float(np.mean(np.clip(tail, 0.0, None)) / (1.0 - min_precision))


def average_recall(matches, n_gt: int) -> float:
    if n_gt <= 0:
        raise NoGroundTruth("recall is undefined without ground truth")
    return float(_flags(matches).sum()) / n_gt


def _flatten(per_frame):
    items, frames = [], []
    for f, boxes in enumerate(per_frame):
        for b in boxes:
            items.append(b)
            frames.append(f)
    return items, frames


def _rank(preds, frames):
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    return [preds[i] for i in order], [frames[i] for i in order]


@dataclass
class EvalReport:
    thresholds: tuple
    n_gt: dict = field(default_factory=dict)
    ap: dict = field(default_factory=dict)  # class -> {threshold: AP}
    ar: dict = field(default_factory=dict)  # class -> {threshold: AR}
    class_ap: dict = field(default_factory=dict)
    mean_ap: float = 0.0
    map_per_threshold: dict = field(default_factory=dict)
    band_map: dict = field(default_factory=dict)
    band_map_per_threshold: dict = field(default_factory=dict)
    group_map: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        key = _threshold_key
        return {
            "thresholds_m": [float(t) for t in self.thresholds],
            "mAP": self.mean_ap,
            "mAP_per_threshold": {key(t): v for t, v in self.map_per_threshold.items()},
            "distance_bands": {
                name: {"mAP": v, "per_threshold": {key(t): x for t, x in self.band_map_per_threshold[name].items()}}
                for name, v in self.band_map.items()
            },
            "size_groups": dict(self.group_map),
            "classes": {
                c: {
                    "n_gt": self.n_gt[c],
                    "AP": self.class_ap[c],
                    "AP_per_threshold": {key(t): v for t, v in self.ap[c].items()},
                    "AR_per_threshold": {key(t): v for t, v in self.ar[c].items()},
                }
                for c in sorted(self.class_ap)
            },
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Flat CSV: ``metric,scope,threshold_m,value``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "scope", "threshold_m", "value"])
        w.writerow(["mAP", "all", "mean", repr(self.mean_ap)])
        for t, v in self.map_per_threshold.items():
            w.writerow(["mAP", "all", _threshold_key(t), repr(v)])
        for name, v in self.band_map.items():
            w.writerow(["mAP", f"band:{name}", "mean", repr(v)])
        for name, v in self.group_map.items():
            w.writerow(["mAP", f"group:{name}", "mean", repr(v)])
        for c in sorted(self.class_ap):
            w.writerow(["AP", f"class:{c}", "mean", repr(self.class_ap[c])])
            for t in self.thresholds:
                w.writerow(["AP", f"class:{c}", _threshold_key(t), repr(self.ap[c][t])])
                w.writerow(["AR", f"class:{c}", _threshold_key(t), repr(self.ar[c][t])])
        return buf.getvalue()


def _threshold_key(t: float) -> str:
    return repr(float(t))


def _class_metrics(preds, pred_frames, gts, gt_frames, cfg: EvalConfig):
    preds, pred_frames = _rank(preds, pred_frames)
    aps, ars = {}, {}
    for t in cfg.dist_thresholds:
        matches = greedy_match(preds, gts, t, pred_frames, gt_frames)
        aps[t] = average_precision(matches, len(gts), cfg.truncated_ap, cfg.min_recall, cfg.min_precision)
        ars[t] = average_recall(matches, len(gts)) if gts else 0.0
    return aps, ars


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else 0.0


def _in_band(box: LabeledBox, lo: float, hi: float) -> bool:
    r = box.box.horizontal_range
    return lo <= r <= hi


def evaluate(
    preds: Sequence[Sequence[LabeledBox]],
    gts: Sequence[Sequence[LabeledBox]],
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Score per-frame predictions against per-frame ground truth."""
    if len(preds) != len(gts):
        raise ValueError("predictions and ground truth must cover the same frames")
    all_preds, pred_frames = _flatten(preds)
    all_gts, gt_frames = _flatten(gts)
    report = EvalReport(thresholds=cfg.dist_thresholds)

    def split(items, frames, keep):
        by_class: dict = {}
        for item, f in zip(items, frames):
            if keep(item):
                by_class.setdefault(item.class_name, ([], []))
                by_class[item.class_name][0].append(item)
                by_class[item.class_name][1].append(f)
        return by_class

    def score(keep):
        p_by = split(all_preds, pred_frames, keep)
        g_by = split(all_gts, gt_frames, keep)
        out = {}
        for c in sorted(g_by):
            p, pf = p_by.get(c, ([], []))
            out[c] = _class_metrics(p, pf, g_by[c][0], g_by[c][1], cfg)
        return out, {c: len(g_by[c][0]) for c in g_by}

    overall, n_gt = score(lambda b: True)
    for c, (aps, ars) in overall.items():
        report.n_gt[c] = n_gt[c]
        report.ap[c] = aps
        report.ar[c] = ars
        report.class_ap[c] = _mean(aps.values())
    report.mean_ap = _mean(report.class_ap.values())
    report.map_per_threshold = {
        t: _mean(report.ap[c][t] for c in report.ap) for t in cfg.dist_thresholds
    }

    for name, lo, hi in cfg.bands:
        band, _ = score(lambda b, lo=lo, hi=hi: _in_band(b, lo, hi))
        report.band_map[name] = _mean(_mean(aps.values()) for aps, _ in band.values())
        report.band_map_per_threshold[name] = {
            t: _mean(aps[t] for aps, _ in band.values()) for t in cfg.dist_thresholds
        }

    for name, classes in cfg.size_groups:
        report.group_map[name] = _mean(report.class_ap[c] for c in classes if c in report.class_ap)
    return report


def label_accuracy(
    preds: Sequence[Sequence[LabeledBox]], gts: Sequence[Sequence[LabeledBox]], threshold: float = 2.0
) -> tuple[float, int]:
    """Class-agnostic center matching; fraction of matched pairs with the GT label."""
    all_preds, pred_frames = _flatten(preds)
    all_gts, gt_frames = _flatten(gts)
    ranked, frames = _rank(all_preds, pred_frames)
    assigned = _match(ranked, all_gts, threshold, frames, gt_frames)
    pairs = [(p, all_gts[g]) for p, g in zip(ranked, assigned) if g is not None]
    if not pairs:
        return 0.0, 0
    correct = sum(p.class_name == g.class_name for p, g in pairs)
    return correct / len(pairs), len(pairs)
