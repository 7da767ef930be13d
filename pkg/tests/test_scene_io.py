import dataclasses
import json
import shutil

import numpy as np
import pytest

from pseudolabel3d.errors import ParseError, SchemaError, VersionError
from pseudolabel3d.frustum import SegMask
from pseudolabel3d.scene import load_catalog, load_scene, save_catalog, save_scene


def with_mask(scene):
    f0 = scene.frames[0]
    cam = next(c for c in f0.cameras if f0.detections2d[c.camera_id])
    bitmap = np.zeros((cam.intrinsics.image_height, cam.intrinsics.image_width), bool)
    bitmap[100:200, 300:450] = True
    bitmap[0, 0] = True
    frame = dataclasses.replace(f0, masks=[SegMask(cam.camera_id, 0, bitmap)])
    return dataclasses.replace(scene, frames=[frame] + scene.frames[1:])


def test_round_trip_is_exact(small_scene, tmp_path):
    scene = with_mask(small_scene)
    save_scene(scene, tmp_path / "s")
    back = load_scene(tmp_path / "s")
    assert back == scene
    assert back.frames[0].masks[0] == scene.frames[0].masks[0]
    assert back.frames[0].points.dtype == np.float32


def test_resave_is_byte_identical(small_scene, tmp_path):
    save_scene(small_scene, tmp_path / "a")
    save_scene(load_scene(tmp_path / "a"), tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


@pytest.fixture
def saved(small_scene, tmp_path):
    root = tmp_path / "scene"
    save_scene(small_scene, root)
    return root


def edit_manifest(root, fn):
    path = root / "manifest.json"
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def first_detection(doc):
    for dets in doc["frames"][0]["detections2d"].values():
        if dets:
            return dets[0]
    raise AssertionError("no detection in frame 0")


def test_inverted_2d_box_is_schema_error(saved):
    def flip(doc):
        det = first_detection(doc)
        det["x_min"], det["x_max"] = det["x_max"], det["x_min"]

    edit_manifest(saved, flip)
    with pytest.raises(SchemaError):
        load_scene(saved)


def test_truncated_payload_is_parse_error(saved):
    payload = saved / "frames" / "000000_points.f32"
    payload.write_bytes(payload.read_bytes()[:-5])
    with pytest.raises(ParseError):
        load_scene(saved)


def test_unknown_version_is_version_error(saved):
    edit_manifest(saved, lambda d: d.update(format_version=99))
    with pytest.raises(VersionError):
        load_scene(saved)


def test_garbled_manifest_is_parse_error(saved):
    (saved / "manifest.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_scene(saved)


def test_missing_key_is_parse_error(saved):
    edit_manifest(saved, lambda d: d["frames"][0].pop("cameras"))
    with pytest.raises(ParseError):
        load_scene(saved)


def test_non_increasing_timestamps_rejected(saved):
    def clash(doc):
        doc["frames"][1]["timestamp"] = doc["frames"][0]["timestamp"]

    edit_manifest(saved, clash)
    with pytest.raises(SchemaError):
        load_scene(saved)


def test_dangling_feature_id_rejected(saved):
    edit_manifest(saved, lambda d: first_detection(d).update(feature_id=10**6))
    with pytest.raises(SchemaError):
        load_scene(saved)


def test_missing_container(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scene(tmp_path / "nowhere")


def test_missing_payload_is_parse_error(saved):
    shutil.rmtree(saved / "frames")
    with pytest.raises(ParseError):
        load_scene(saved)


def test_catalog_round_trip_and_version(small_scene, tmp_path):
    path = tmp_path / "catalog.json"
    save_catalog(small_scene.catalog, path)
    assert load_catalog(path) == small_scene.catalog
    doc = json.loads(path.read_text())
    doc["format_version"] = 2
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionError):
        load_catalog(path)
    path.write_text("[")
    with pytest.raises(ParseError):
        load_catalog(path)
