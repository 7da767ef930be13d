"""Scene data model and the on-disk scene container.

A scene directory holds ``manifest.json`` (versioned metadata), the text
catalog and size-prior tables, and one set of little-endian binary payloads
per frame under ``frames/``. See ``docs/formats.md`` for the byte layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, SchemaError, VersionError
from .frustum import SegMask
from .geometry import Box2D, Box3D, CameraIntrinsics, RigidTransform
from .priors import parse_size_priors, size_priors_document
from .semantics import LabeledBox, Provenance, TextCatalog
from .temporal import EgoPose

SCENE_FORMAT = "pseudolabel3d-scene"
SCENE_FORMAT_VERSION = 1
CATALOG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Camera:
    camera_id: str
    intrinsics: CameraIntrinsics
    lidar_to_camera: RigidTransform


def _arr_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and np.array_equal(a, b)


@dataclass(eq=False)
class Frame:
    frame_id: str
    timestamp: float
    ego_pose: EgoPose
    cameras: list
    points: np.ndarray
    detections2d: dict = field(default_factory=dict)
    features2d: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.float32))
    masks: list = field(default_factory=list)
    gt_boxes: Optional[list] = None
    point_feature_ids: Optional[np.ndarray] = None
    features3d: Optional[np.ndarray] = None

    def validate(self) -> None:
        cam_ids = {c.camera_id: c for c in self.cameras}
        if len(cam_ids) != len(self.cameras):
            raise SchemaError(f"frame {self.frame_id}: duplicate camera ids")
        pts = np.asarray(self.points)
        if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise SchemaError(f"frame {self.frame_id}: points must be finite (N, 3)")
        for cam_id, dets in self.detections2d.items():
            if cam_id not in cam_ids:
                raise SchemaError(f"frame {self.frame_id}: detections for unknown camera {cam_id}")
            for det in dets:
                if det.feature_id is not None and not 0 <= det.feature_id < len(self.features2d):
                    raise SchemaError(f"frame {self.frame_id}: feature id {det.feature_id} unresolved")
        for m in self.masks:
            cam = cam_ids.get(m.camera_id)
            if cam is None:
                raise SchemaError(f"frame {self.frame_id}: mask for unknown camera {m.camera_id}")
            if m.bitmap.shape != (cam.intrinsics.image_height, cam.intrinsics.image_width):
                raise SchemaError(f"frame {self.frame_id}: mask size differs from image size")
            if not 0 <= m.box_id < len(self.detections2d.get(m.camera_id, [])):
                raise SchemaError(f"frame {self.frame_id}: mask refers to a missing box")
        if self.point_feature_ids is not None:
            ids = self.point_feature_ids
            n_feat = 0 if self.features3d is None else len(self.features3d)
            if len(ids) != len(pts) or (len(ids) and (ids.min() < -1 or ids.max() >= n_feat)):
                raise SchemaError(f"frame {self.frame_id}: point feature ids do not resolve")

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.timestamp == other.timestamp
            and self.ego_pose == other.ego_pose
            and list(self.cameras) == list(other.cameras)
            and _arr_eq(self.points, other.points)
            and self.detections2d == other.detections2d
            and _arr_eq(self.features2d, other.features2d)
            and list(self.masks) == list(other.masks)
            and self.gt_boxes == other.gt_boxes
            and _arr_eq(self.point_feature_ids, other.point_feature_ids)
            and _arr_eq(self.features3d, other.features3d)
        )


@dataclass(eq=False)
class Scene:
    scene_id: str
    frames: list
    catalog: TextCatalog
    priors: list

    def validate(self) -> None:
        stamps = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise SchemaError("frame timestamps must be strictly increasing")
        for f in self.frames:
            f.validate()
            if len(f.features2d) and f.features2d.shape[1] != self.catalog.dim:
                raise SchemaError(f"frame {f.frame_id}: 2D feature dimension differs from catalog")
            if f.features3d is not None and len(f.features3d) and f.features3d.shape[1] != self.catalog.dim:
                raise SchemaError(f"frame {f.frame_id}: 3D feature dimension differs from catalog")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.frames == other.frames
            and self.catalog == other.catalog
            and list(self.priors) == list(other.priors)
        )


# ---------------------------------------------------------------- encoding


def _transform_doc(t: RigidTransform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def _transform(doc) -> RigidTransform:
    return RigidTransform(np.array(doc["rotation"], dtype=np.float64), np.array(doc["translation"], dtype=np.float64))


def _box3d_doc(b: Box3D) -> dict:
    return {"center": list(b.center), "size": list(b.size), "score": b.score, "class_id": b.class_id}


def _box3d(doc) -> Box3D:
    return Box3D(tuple(doc["center"]), tuple(doc["size"]), float(doc["score"]), doc["class_id"])


def labeled_box_doc(b: LabeledBox) -> dict:
    return {
        "box": _box3d_doc(b.box),
        "class_name": b.class_name,
        "confidence": b.confidence,
        "provenance": b.provenance.value,
    }


def labeled_box(doc) -> LabeledBox:
    return LabeledBox(_box3d(doc["box"]), doc["class_name"], float(doc["confidence"]), Provenance(doc["provenance"]))


def box3d_doc(b: Box3D) -> dict:
    return _box3d_doc(b)


def box3d_from_doc(doc) -> Box3D:
    return _box3d(doc)


def _box2d_doc(b: Box2D) -> dict:
    return {
        "x_min": b.x_min,
        "y_min": b.y_min,
        "x_max": b.x_max,
        "y_max": b.y_max,
        "score": b.score,
        "class_id": b.class_id,
        "feature_id": b.feature_id,
    }


def _box2d(doc) -> Box2D:
    return Box2D(
        float(doc["x_min"]),
        float(doc["y_min"]),
        float(doc["x_max"]),
        float(doc["y_max"]),
        float(doc["score"]),
        doc["class_id"],
        doc["feature_id"],
    )


def catalog_document(catalog: TextCatalog) -> dict:
    return {
        "format_version": CATALOG_FORMAT_VERSION,
        "dim": catalog.dim,
        "entries": [
            {"class_name": n, "embedding": [float(x) for x in row]}
            for n, row in zip(catalog.names, catalog.embeddings)
        ],
    }


def parse_catalog(doc: dict) -> TextCatalog:
    if doc.get("format_version") != CATALOG_FORMAT_VERSION:
        raise VersionError(f"unsupported catalog version {doc.get('format_version')!r}")
    dim = int(doc["dim"])
    names = [e["class_name"] for e in doc["entries"]]
    emb = np.array([e["embedding"] for e in doc["entries"]], dtype=np.float32).reshape(len(names), dim)
    return TextCatalog(tuple(names), emb)


def save_catalog(catalog: TextCatalog, path) -> None:
    _write_json(Path(path), catalog_document(catalog))


def load_catalog(path) -> TextCatalog:
    try:
        doc = json.loads(Path(path).read_text())
        return parse_catalog(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed catalog {path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_payload(root: Path, rel: str, array: np.ndarray, dtype: str) -> dict:
    data = np.ascontiguousarray(array, dtype=dtype)
    (root / rel).write_bytes(data.tobytes())
    return {"file": rel, "count": int(data.shape[0]) if data.ndim else 0}


def _read_payload(root: Path, doc, dtype: str, width: Optional[int]) -> np.ndarray:
    raw = (root / doc["file"]).read_bytes()
    count = int(doc["count"])
    itemsize = np.dtype(dtype).itemsize * (width or 1)
    if len(raw) != count * itemsize:
        raise ParseError(f"{doc['file']}: expected {count * itemsize} bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).copy()
    return arr.reshape(count, width) if width is not None else arr


def save_scene(scene: Scene, path) -> Path:
    """Write ``scene`` into directory ``path`` (created if needed)."""
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    dim = scene.catalog.dim
    frames = []
    for i, f in enumerate(scene.frames):
        stem = f"frames/{i:06d}"
        doc = {
            "frame_id": f.frame_id,
            "timestamp": f.timestamp,
            "ego_pose": {
                "ego_to_global": _transform_doc(f.ego_pose.ego_to_global),
                "lidar_to_ego": _transform_doc(f.ego_pose.lidar_to_ego),
            },
            "cameras": [
                {
                    "camera_id": c.camera_id,
                    "intrinsics": {
                        "fx": c.intrinsics.fx,
                        "fy": c.intrinsics.fy,
                        "cx": c.intrinsics.cx,
                        "cy": c.intrinsics.cy,
                        "image_width": c.intrinsics.image_width,
                        "image_height": c.intrinsics.image_height,
                    },
                    "lidar_to_camera": _transform_doc(c.lidar_to_camera),
                }
                for c in f.cameras
            ],
            "points": _write_payload(root, stem + "_points.f32", np.asarray(f.points).reshape(-1, 3), "<f4"),
            "features2d": _write_payload(root, stem + "_features2d.f32", np.asarray(f.features2d).reshape(-1, dim), "<f4"),
            "detections2d": {cam: [_box2d_doc(b) for b in dets] for cam, dets in f.detections2d.items()},
            "masks": [
                {"camera_id": m.camera_id, "box_id": m.box_id, "height": m.height, "width": m.width, "counts": m.to_rle()}
                for m in f.masks
            ],
            "gt_boxes": None if f.gt_boxes is None else [labeled_box_doc(b) for b in f.gt_boxes],
            "point_feature_ids": None,
            "features3d": None,
        }
        if f.point_feature_ids is not None:
            doc["point_feature_ids"] = _write_payload(root, stem + "_point_feature_ids.i32", f.point_feature_ids, "<i4")
        if f.features3d is not None:
            doc["features3d"] = _write_payload(root, stem + "_features3d.f32", np.asarray(f.features3d).reshape(-1, dim), "<f4")
        frames.append(doc)

    _write_json(root / "catalog.json", catalog_document(scene.catalog))
    _write_json(root / "size_priors.json", size_priors_document(scene.priors))
    manifest = {
        "format": SCENE_FORMAT,
        "format_version": SCENE_FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "feature_dim": dim,
        "catalog": "catalog.json",
        "size_priors": "size_priors.json",
        "frames": frames,
    }
    _write_json(root / "manifest.json", manifest)
    return root


def _decode_frame(root: Path, doc: dict, dim: int) -> Frame:
    cameras = [
        Camera(
            c["camera_id"],
            CameraIntrinsics(**{k: c["intrinsics"][k] for k in ("fx", "fy", "cx", "cy", "image_width", "image_height")}),
            _transform(c["lidar_to_camera"]),
        )
        for c in doc["cameras"]
    ]
    ego = doc["ego_pose"]
    pose = EgoPose(float(doc["timestamp"]), _transform(ego["ego_to_global"]), _transform(ego["lidar_to_ego"]))
    pfi = doc.get("point_feature_ids")
    f3d = doc.get("features3d")
    gt = doc.get("gt_boxes")
    return Frame(
        frame_id=doc["frame_id"],
        timestamp=float(doc["timestamp"]),
        ego_pose=pose,
        cameras=cameras,
        points=_read_payload(root, doc["points"], "<f4", 3).astype(np.float32),
        detections2d={cam: [_box2d(b) for b in dets] for cam, dets in doc["detections2d"].items()},
        features2d=_read_payload(root, doc["features2d"], "<f4", dim).astype(np.float32),
        masks=[SegMask.from_rle(m["camera_id"], int(m["box_id"]), int(m["height"]), int(m["width"]), m["counts"]) for m in doc["masks"]],
        gt_boxes=None if gt is None else [labeled_box(b) for b in gt],
        point_feature_ids=None if pfi is None else _read_payload(root, pfi, "<i4", None).astype(np.int32),
        features3d=None if f3d is None else _read_payload(root, f3d, "<f4", dim).astype(np.float32),
    )


def load_scene(path) -> Scene:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != SCENE_FORMAT:
        raise ParseError("not a scene manifest")
    if manifest.get("format_version") != SCENE_FORMAT_VERSION:
        raise VersionError(f"unsupported scene format version {manifest.get('format_version')!r}")
    try:
        dim = int(manifest["feature_dim"])
        catalog = parse_catalog(json.loads((root / manifest["catalog"]).read_text()))
        priors = parse_size_priors(json.loads((root / manifest["size_priors"]).read_text()))
        frames = [_decode_frame(root, doc, dim) for doc in manifest["frames"]]
        scene = Scene(manifest["scene_id"], frames, catalog, priors)
    except (ParseError, VersionError):
        raise
    except (KeyError, TypeError, AttributeError, json.JSONDecodeError, OSError) as exc:
        raise ParseError(f"malformed scene container: {exc!r}") from exc
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    scene.validate()
    return scene
