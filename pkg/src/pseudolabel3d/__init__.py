"""Open-vocabulary 3D pseudo labels from LiDAR frames and 2D detections."""

from .bev import export_bev_svg
from .errors import (
    DegenerateRange,
    DomainError,
    EmptyInput,
    EmptyPositiveSet,
    InsufficientPoints,
    IoError,
    NoGroundTruth,
    NoHorizontalPlane,
    ParseError,
    PseudoLabelError,
    SchemaError,
    ShapeError,
    VersionError,
    ZeroVector,
)
from .frustum import GroundPlane, LiftConfig, RansacConfig, SegMask, fit_ground_plane, lift_frame, region_grow
from .geometry import Box2D, Box3D, CameraIntrinsics, RigidTransform, compose, invert, iou_2d, iou_3d, project_points
from .metrics import EvalConfig, EvalReport, average_precision, average_recall, evaluate, greedy_match
from .pipeline import PipelineConfig, PipelineResult, run_pipeline, write_outputs
from .priors import DEFAULT_SIZE_PRIORS, SizePrior, load_size_priors
from .scene import Camera, Frame, Scene, load_scene, save_scene
from .semantics import LabelConfig, LabeledBox, Provenance, TextCatalog, fuse_labels, label_frame, prior_recalibrate
from .spatial import ObjectBank, SpatialConfig, build_object_bank, matches_prior, place_objects, prior_gate, sampling_ratio
from .supervision import (
    LossConfig,
    Prediction,
    alignment_loss,
    alignment_loss_grad,
    focal_loss,
    generic_object_loss,
    hungarian_match,
    l1_box_loss,
)
from .synth import SynthConfig, generate_synthetic
from .temporal import EgoPose, TemporalConfig, temporal_update, temporal_update_bidirectional

__version__ = "0.1.0"
