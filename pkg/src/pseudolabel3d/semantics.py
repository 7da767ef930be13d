"""Class assignment for 3D boxes: image matching, 2D/3D fusion, size-prior recalibration."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import ZeroVector
from .geometry import Box2D, Box3D, CameraIntrinsics, RigidTransform, iou_2d
from .priors import SizePrior

if TYPE_CHECKING:
    from .scene import Frame

NEAR_PLANE = 1e-3

# corner index pairs of the 12 box edges (corners ordered x-major, then y, then z)
_EDGES = [
    (a, b)
    for a in range(8)
    for b in range(a + 1, 8)
    if bin(a ^ b).count("1") == 1
]


class Provenance(str, enum.Enum):
    FROM_3D = "From3D"
    FROM_2D = "From2D"
    FROM_PRIOR = "FromPrior"


@dataclass(frozen=True, eq=False)
class TextCatalog:
    names: tuple
    embeddings: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        emb = np.array(self.embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] != len(names):
            raise ValueError("catalog needs one embedding row per class name")
        if len(set(names)) != len(names):
            raise ValueError("catalog class names must be unique")
        emb.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "embeddings", emb)

    def __len__(self):
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __eq__(self, other):
        if not isinstance(other, TextCatalog):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.embeddings, other.embeddings)


@dataclass(frozen=True)
class LabeledBox:
    box: Box3D
    class_name: str
    confidence: float
    provenance: Provenance = Provenance.FROM_3D


@dataclass(frozen=True)
class LabelConfig:
    use_2d: bool = True
    use_priors: bool = True


def project_box3d_to_image(
    box: Box3D, extrinsic: RigidTransform, intrinsics: CameraIntrinsics
) -> Optional[Box2D]:
    """Pixel envelope of a 3D box, clipped to the image.

    Edges crossing the camera plane are cut at a small positive depth so
    that boxes straddling the camera still project correctly.
    """
    cam = extrinsic.apply(box.corners())
    z = cam[:, 2]
    front = z > NEAR_PLANE
    if not front.any():
        return None
    pts = [cam[front]]
    for a, b in _EDGES:
        if front[a] != front[b]:
            t = (NEAR_PLANE - z[a]) / (z[b] - z[a])
            pts.append((cam[a] + t * (cam[b] - cam[a]))[None, :])
    pts = np.concatenate(pts)
    u = intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy
    x0 = max(float(u.min()), 0.0)
    x1 = min(float(u.max()), float(intrinsics.image_width))
    y0 = max(float(v.min()), 0.0)
    y1 = min(float(v.max()), float(intrinsics.image_height))
    if x0 >= x1 or y0 >= y1:
        return None
    return Box2D(x0, y0, x1, y1, score=box.score)


def nearest_2d_match(projected: Box2D, detections: Sequence[Box2D]) -> Optional[tuple[int, float]]:
    best_idx, best_iou = None, 0.0
    for k, det in enumerate(detections):
        iou = iou_2d(projected, det)
        if iou > best_iou:
            best_idx, best_iou = k, iou
    if best_idx is None:
        return None
    return best_idx, best_iou


def cosine_similarities(feature, embeddings: np.ndarray) -> np.ndarray:
    f = np.asarray(feature, dtype=np.float64)
    emb = np.asarray(embeddings, dtype=np.float64)
    norm_f = np.linalg.norm(f)
    norms = np.linalg.norm(emb, axis=1)
    if norm_f == 0.0 or np.any(norms == 0.0):
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return np.clip(emb @ f / (norms * norm_f), -1.0, 1.0)


def fuse_labels(f3d, f2d, catalog: TextCatalog) -> tuple[str, float, Provenance]:
    """Pick the label whose best cosine score is larger between the 3D and 2D features."""
    if len(catalog) == 0:
        raise ValueError("empty text catalog")
    s3d = cosine_similarities(f3d, catalog.embeddings)
    j3d = int(np.argmax(s3d))
    result = (catalog.names[j3d], float(s3d[j3d]), Provenance.FROM_3D)
    if f2d is not None:
        s2d = cosine_similarities(f2d, catalog.embeddings)
        j2d = int(np.argmax(s2d))
        if s2d[j2d] > s3d[j3d]:
            result = (catalog.names[j2d], float(s2d[j2d]), Provenance.FROM_2D)
    return result


def _cocentered_iou(dims_a, dims_b) -> float:
    inter = 1.0
    for a, b in zip(dims_a, dims_b):
        inter *= min(a, b)
    vol_a = dims_a[0] * dims_a[1] * dims_a[2]
    vol_b = dims_b[0] * dims_b[1] * dims_b[2]
    return inter / (vol_a + vol_b - inter)


def prior_iou(box: Box3D, prior: SizePrior) -> float:
    """IoU between the box and a prior-sized box sharing its center; w/l swap allowed."""
    w, l, h = prior.dims
    return max(_cocentered_iou(box.size, (w, l, h)), _cocentered_iou(box.size, (l, w, h)))


def best_prior(box: Box3D, priors: Sequence[SizePrior]) -> tuple[SizePrior, float]:
    if not priors:
        raise ValueError("at least one size prior is required")
    scores = [prior_iou(box, p) for p in priors]
    k = int(np.argmax(scores))
    return priors[k], scores[k]


def prior_recalibrate(box: Box3D, fused, priors: Sequence[SizePrior]) -> LabeledBox:
    """Keep the fused label unless the best size prior scores higher."""
    prior, score = best_prior(box, priors)
    if fused is None:
        return LabeledBox(box, prior.class_name, score, Provenance.FROM_PRIOR)
    name, confidence = fused[0], fused[1]
    provenance = fused[2] if len(fused) > 2 else Provenance.FROM_3D
    if score > confidence:
        return LabeledBox(box, prior.class_name, score, Provenance.FROM_PRIOR)
    return LabeledBox(box, name, confidence, provenance)


def match_box_in_frame(box: Box3D, frame: "Frame") -> Optional[tuple[str, int, float]]:
    """Best (camera_id, detection index, IoU) over all cameras of the frame."""
    best = None
    for cam in sorted(frame.cameras, key=lambda c: c.camera_id):
        dets = frame.detections2d.get(cam.camera_id, [])
        if not dets:
            continue
        proj = project_box3d_to_image(box, cam.lidar_to_camera, cam.intrinsics)
        if proj is None:
            continue
        hit = nearest_2d_match(proj, dets)
        if hit is not None and (best is None or hit[1] > best[2]):
            best = (cam.camera_id, hit[0], hit[1])
    return best


def label_frame(
    boxes: Sequence[Box3D],
    features3d: Sequence[Optional[np.ndarray]],
    frame: "Frame",
    catalog: TextCatalog,
    priors: Sequence[SizePrior],
    cfg: LabelConfig = LabelConfig(),
) -> list[LabeledBox]:
    """One label per box; boxes seen by no camera fall back to the 3D/prior path."""
    if len(features3d) != len(boxes):
        raise ValueError("one (possibly missing) 3D feature per box is required")
    out = []
    for box, f3d in zip(boxes, features3d):
        f2d = None
        if cfg.use_2d:
            hit = match_box_in_frame(box, frame)
            if hit is not None:
                det = frame.detections2d[hit[0]][hit[1]]
                if det.feature_id is not None:
                    f2d = frame.features2d[det.feature_id]
        if f3d is not None:
            fused = fuse_labels(f3d, f2d, catalog)
        elif f2d is not None:
            name, conf, _ = fuse_labels(f2d, None, catalog)
            fused = (name, conf, Provenance.FROM_2D)
        else:
            fused = None
        if fused is None or cfg.use_priors:
            out.append(prior_recalibrate(box, fused, priors))
        else:
            out.append(LabeledBox(box, fused[0], fused[1], fused[2]))
    return out


def alignment_positives(
    matched_classes: Sequence[Optional[int]], detection_classes: Sequence[Optional[int]]
) -> tuple[list[int], list[list[int]]]:
    """Rows usable for the alignment loss and their positive 2D feature sets.

    ``matched_classes[i]`` is the text-embedding id of the 2D detection that
    3D box ``i`` matched (``None`` when unmatched); positives are every 2D
    feature sharing that id.
    """
    rows, positives = [], []
    for i, cls in enumerate(matched_classes):
        if cls is None:
            continue
        pos = [k for k, c in enumerate(detection_classes) if c == cls]
        if pos:
            rows.append(i)
            positives.append(pos)
    return rows, positives
