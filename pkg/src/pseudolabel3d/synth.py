"""Synthetic driving scenes with planted, prior-sized objects and exact ground truth.

The ego vehicle drives along +x in a static world. Objects are axis-aligned
boxes resting on a flat ground; LiDAR returns are sampled on the faces turned
towards the sensor with a surface density falling off as 1/range^2 (capped near the
sensor). Each camera gets ideal 2D boxes for every object it sees, and every
object carries a noisy copy of its class text embedding as both its 2D and
its 3D feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Box2D, Box3D, CameraIntrinsics, RigidTransform
from .priors import DEFAULT_SIZE_PRIORS
from .scene import Camera, Frame, Scene
from .semantics import LabeledBox, Provenance, TextCatalog, project_box3d_to_image
from .temporal import EgoPose


@dataclass(frozen=True)
class SynthConfig:
    rng_seed: int = 0
    n_frames: int = 20
    frame_dt: float = 0.5
    classes: Optional[tuple] = None  # default: every size-prior class
    objects_per_class: int = 3
    ego_speed: float = 4.0
    lidar_range: float = 50.0
    min_object_range: float = 4.0
    lidar_height: float = 1.8
    # returns per m^2 of exposed surface: density_coeff / range^2, capped at max_density
    density_coeff: float = 15000.0
    max_density: float = 150.0
    ground_points: int = 6000
    ground_noise: float = 0.02
    point_noise: float = 0.01
    visible_faces_only: bool = True
    size_jitter: float = 0.05
    min_gap: float = 1.5
    road_half_width: float = 3.0
    n_cameras: int = 6
    camera_hfov_deg: float = 70.0
    image_width: int = 1600
    image_height: int = 900
    min_box_pixels: float = 4.0
    feature_dim: int = 64
    feature_noise: float = 0.05
    drop_fraction: float = 0.0
    drop_every: int = 2

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("need at least one frame")
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError("drop_fraction must lie in [0, 1]")


def surface_density(cfg: SynthConfig, rng_m: float) -> float:
    return min(cfg.max_density, cfg.density_coeff / max(rng_m, 1e-6) ** 2)


def exposed_area(size) -> float:
    """Area of the five faces that can return points (the bottom rests on the ground)."""
    w, l, h = size
    return w * l + 2.0 * h * (w + l)


def visible_area(box: Box3D, faces: np.ndarray) -> float:
    w, l, h = box.size
    return float(np.dot(faces, [w * l, l * h, l * h, w * h, w * h]))


def expected_point_count(cfg: SynthConfig, size, rng_m: float, area: Optional[float] = None) -> float:
    return surface_density(cfg, rng_m) * (exposed_area(size) if area is None else area)


def facing_sensor(box: Box3D) -> np.ndarray:
    """Which of (top, -x, +x, -y, +y) faces are seen from a sensor at the origin."""
    lo, hi = box.lo, box.hi
    return np.array([hi[2] < 0.0, lo[0] > 0.0, hi[0] < 0.0, lo[1] > 0.0, hi[1] < 0.0])


def sample_surface(
    rng: np.random.Generator, box: Box3D, n: int, faces: Optional[np.ndarray] = None
) -> np.ndarray:
    """``n`` points uniformly on the top and side faces of ``box`` (or the ``faces`` subset)."""
    w, l, h = box.size
    lo, hi = box.lo, box.hi
    areas = np.array([w * l, l * h, l * h, w * h, w * h])
    if faces is not None:
        areas = np.where(faces, areas, 0.0)
    if n == 0 or areas.sum() == 0.0:
        return np.zeros((0, 3))
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.random((n, 3))
    pts = lo + u * (hi - lo)
    pts[face == 0, 2] = hi[2]
    pts[face == 1, 0] = lo[0]
    pts[face == 2, 0] = hi[0]
    pts[face == 3, 1] = lo[1]
    pts[face == 4, 1] = hi[1]
    return pts


def camera_rig(cfg: SynthConfig) -> list[Camera]:
    fx = (cfg.image_width / 2.0) / math.tan(math.radians(cfg.camera_hfov_deg) / 2.0)
    intr = CameraIntrinsics(fx, fx, cfg.image_width / 2.0, cfg.image_height / 2.0, cfg.image_width, cfg.image_height)
    cams = []
    for k in range(cfg.n_cameras):
        yaw = 2.0 * math.pi * k / cfg.n_cameras
        c, s = math.cos(yaw), math.sin(yaw)
        # rows: camera x (right), y (down), z (forward) expressed in the LiDAR frame
        rot = np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])
        cams.append(Camera(f"CAM_{k}", intr, RigidTransform(rot, np.zeros(3))))
    return cams


def make_catalog(names, dim: int, rng: np.random.Generator) -> TextCatalog:
    emb = rng.standard_normal((len(names), dim))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return TextCatalog(tuple(names), emb.astype(np.float32))


@dataclass(frozen=True)
class PlantedObject:
    class_name: str
    center_xy: tuple  # global frame
    size: tuple  # (w, l, h) along global x, y, z


def plant_objects(cfg: SynthConfig, rng: np.random.Generator) -> list[PlantedObject]:
    priors = {p.class_name: p for p in DEFAULT_SIZE_PRIORS}
    classes = cfg.classes or tuple(priors)
    path_len = cfg.ego_speed * cfg.frame_dt * (cfg.n_frames - 1)
    reach = 0.8 * cfg.lidar_range
    placed: list[PlantedObject] = []
    for name in classes:
        prior = priors[name]
        for _ in range(cfg.objects_per_class):
            for _attempt in range(1000):
                jitter = 1.0 + rng.uniform(-cfg.size_jitter, cfg.size_jitter, 3)
                w, l, h = np.array(prior.dims) * jitter
                if rng.random() < 0.5:
                    w, l = l, w
                x = rng.uniform(-reach, path_len + reach)
                y = rng.uniform(-reach, reach)
                if abs(y) - l / 2.0 < cfg.road_half_width:
                    continue
                if any(
                    abs(x - o.center_xy[0]) < (w + o.size[0]) / 2.0 + cfg.min_gap
                    and abs(y - o.center_xy[1]) < (l + o.size[1]) / 2.0 + cfg.min_gap
                    for o in placed
                ):
                    continue
                placed.append(PlantedObject(name, (float(x), float(y)), (float(w), float(l), float(h))))
                break
    return placed


def generate_synthetic(cfg: SynthConfig = SynthConfig()) -> Scene:
    root = np.random.SeedSequence(cfg.rng_seed)
    world_ss, cat_ss, frames_ss = root.spawn(3)
    world_rng = np.random.default_rng(world_ss)
    objects = plant_objects(cfg, world_rng)
    names = tuple(p.class_name for p in DEFAULT_SIZE_PRIORS)
    catalog = make_catalog(names, cfg.feature_dim, np.random.default_rng(cat_ss))
    cams = camera_rig(cfg)
    lidar_to_ego = RigidTransform.from_translation(0.0, 0.0, cfg.lidar_height)

    frames = []
    for i, fss in enumerate(frames_ss.spawn(cfg.n_frames)):
        rng = np.random.default_rng(fss)
        t = i * cfg.frame_dt
        ego_x = cfg.ego_speed * t
        pose = EgoPose(t, RigidTransform.from_translation(ego_x, 0.0, 0.0), lidar_to_ego)
        frames.append(_make_frame(cfg, i, pose, objects, catalog, cams, rng))
    return Scene(f"synth-{cfg.rng_seed}", frames, catalog, list(DEFAULT_SIZE_PRIORS))


def _make_frame(cfg, index, pose, objects, catalog, cams, rng) -> Frame:
    to_lidar = pose.lidar_to_global().inverse()
    gt, gt_points = [], []
    for obj in objects:
        w, l, h = obj.size
        center = to_lidar.apply(np.array([obj.center_xy[0], obj.center_xy[1], h / 2.0]))
        rng_m = math.hypot(center[0], center[1])
        if not cfg.min_object_range <= rng_m <= cfg.lidar_range:
            continue
        box = Box3D(tuple(center), obj.size, 1.0, catalog.index(obj.class_name))
        faces = facing_sensor(box) if cfg.visible_faces_only else None
        area = None if faces is None else visible_area(box, faces)
        n = int(rng.poisson(expected_point_count(cfg, obj.size, rng_m, area)))
        pts = sample_surface(rng, box, n, faces)
        pts = pts + rng.normal(0.0, cfg.point_noise, pts.shape)
        gt.append(LabeledBox(box, obj.class_name, 1.0, Provenance.FROM_3D))
        gt_points.append(pts)

    radius = np.sqrt(rng.uniform(2.0**2, cfg.lidar_range**2, cfg.ground_points))
    theta = rng.uniform(0.0, 2.0 * math.pi, cfg.ground_points)
    ground = np.column_stack(
        [
            radius * np.cos(theta),
            radius * np.sin(theta),
            -cfg.lidar_height + rng.normal(0.0, cfg.ground_noise, cfg.ground_points),
        ]
    )
    points = np.concatenate([ground] + gt_points) if gt_points else ground
    ids = np.full(len(ground), -1, dtype=np.int32)
    ids = np.concatenate([ids] + [np.full(len(p), k, dtype=np.int32) for k, p in enumerate(gt_points)])

    dim = catalog.dim
    emb = catalog.embeddings.astype(np.float64)
    cls_idx = [catalog.index(g.class_name) for g in gt]
    features3d = (emb[cls_idx] + rng.normal(0.0, cfg.feature_noise, (len(gt), dim))).astype(np.float32)

    dropped = set()
    if cfg.drop_fraction > 0 and cfg.drop_every > 0 and index % cfg.drop_every == cfg.drop_every - 1:
        n_drop = int(round(cfg.drop_fraction * len(gt)))
        dropped = set(rng.choice(len(gt), size=n_drop, replace=False).tolist()) if n_drop else set()

    detections, feats = {}, []
    for cam in cams:
        dets = []
        for k, g in enumerate(gt):
            if k in dropped:
                continue
            proj = project_box3d_to_image(g.box, cam.lidar_to_camera, cam.intrinsics)
            if proj is None:
                continue
            if proj.x_max - proj.x_min < cfg.min_box_pixels or proj.y_max - proj.y_min < cfg.min_box_pixels:
                continue
            feats.append(emb[cls_idx[k]] + rng.normal(0.0, cfg.feature_noise, dim))
            dets.append(Box2D(proj.x_min, proj.y_min, proj.x_max, proj.y_max, 1.0, cls_idx[k], len(feats) - 1))
        detections[cam.camera_id] = dets
    features2d = np.array(feats, dtype=np.float32).reshape(len(feats), dim)

    return Frame(
        frame_id=f"{index:06d}",
        timestamp=pose.timestamp,
        ego_pose=pose,
        cameras=list(cams),
        points=points.astype(np.float32),
        detections2d=detections,
        features2d=features2d,
        masks=[],
        gt_boxes=gt,
        point_feature_ids=ids,
        features3d=features3d,
    )
