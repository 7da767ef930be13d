import dataclasses

import pytest

from pseudolabel3d.pipeline import (
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    run_pipeline,
    write_outputs,
)
from pseudolabel3d.semantics import Provenance


def test_small_scene_quality(small_scene):
    res = run_pipeline(small_scene)
    assert res.report is not None
    assert res.report.map_per_threshold[2.0] >= 0.7
    assert res.label_accuracy >= 0.95
    assert len(res.labels) == len(small_scene.frames)
    assert all(lb.provenance in tuple(Provenance) for frame in res.labels for lb in frame)


def test_no_detections_gives_no_boxes(small_scene):
    frames = [dataclasses.replace(f, detections2d={c.camera_id: [] for c in f.cameras}) for f in small_scene.frames]
    res = run_pipeline(dataclasses.replace(small_scene, frames=frames))
    assert all(len(b) == 0 for b in res.lifted)
    assert all(len(b) == 0 for b in res.labels)
    assert res.report.mean_ap == 0.0


def test_no_ground_truth_skips_report(small_scene):
    frames = [dataclasses.replace(f, gt_boxes=None) for f in small_scene.frames]
    res = run_pipeline(dataclasses.replace(small_scene, frames=frames))
    assert res.report is None and res.label_accuracy is None


def test_temporal_disabled_passes_merged_through(small_scene):
    res = run_pipeline(small_scene, PipelineConfig(temporal_enabled=False))
    assert res.temporal == res.merged


def test_temporal_output_covers_every_merged_box(small_scene):
    # kept verbatim, replaced by an envelope, or suppressed by one: always contained
    res = run_pipeline(small_scene)
    for merged, refined in zip(res.merged, res.temporal):
        for m in merged:
            assert any(t.contains_box(m) for t in refined)


def test_spatial_stage_adds_boxes(small_scene):
    res = run_pipeline(small_scene, PipelineConfig(spatial_enabled=True))
    assert res.final is not None
    assert all(len(f) >= len(t) for f, t in zip(res.final, res.temporal))


def test_run_is_deterministic_across_threads(small_scene, tmp_path):
    cfg = PipelineConfig(seed=11, spatial_enabled=True)
    paths = {}
    for name, threads in (("a", 1), ("b", 4), ("c", 1)):
        paths[name] = write_outputs(small_scene, run_pipeline(small_scene, cfg, threads), tmp_path / name)
    for name in ("b", "c"):
        assert [p.name for p in paths[name]] == [p.name for p in paths["a"]]
        for p, q in zip(paths["a"], paths[name]):
            assert p.read_bytes() == q.read_bytes()


def test_config_dict_round_trip():
    cfg = PipelineConfig(seed=3, temporal_enabled=False)
    assert config_from_dict(config_to_dict(cfg)) == cfg
    assert config_from_dict({"temporal": {"far_distance": 20.0}}).temporal.far_distance == 20.0
    with pytest.raises(ValueError):
        config_from_dict({"no_such_option": 1})
