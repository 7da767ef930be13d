import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import hom
from pseudolabel3d.geometry import Box3D, RigidTransform
from pseudolabel3d.temporal import (
    EgoPose,
    TemporalConfig,
    build_overlap_matrix,
    frame_to_frame,
    project_box_between_frames,
    temporal_update,
    temporal_update_bidirectional,
)

LIDAR = RigidTransform.from_translation(0.0, 0.0, 1.8)


def pose(x=0.0, y=0.0, yaw=0.0, t=0.0):
    return EgoPose(t, RigidTransform.from_yaw(yaw, (x, y, 0.0)), LIDAR)


def bounds(lo, hi, score=1.0):
    return Box3D.from_bounds(lo, hi, score)


# ---- projection between frames


def test_identical_poses_identity():
    box = Box3D((3.0, -2.0, 0.5), (1.0, 2.0, 1.5))
    assert project_box_between_frames(box, pose(5, 1), pose(5, 1)) == box


def test_ego_forward_shift_moves_box_back():
    box = Box3D((10.0, 1.0, 0.0), (2.0, 4.0, 1.5))
    moved = project_box_between_frames(box, pose(0.0), pose(2.0))
    src, dst = pose(0.0), pose(2.0)
    chain = (
        np.linalg.inv(hom(dst.lidar_to_ego.rotation, dst.lidar_to_ego.translation))
        @ np.linalg.inv(hom(dst.ego_to_global.rotation, dst.ego_to_global.translation))
        @ hom(src.ego_to_global.rotation, src.ego_to_global.translation)
        @ hom(src.lidar_to_ego.rotation, src.lidar_to_ego.translation)
    )
    oracle = (chain @ np.r_[box.center, 1.0])[:3]
    assert np.allclose(moved.center, oracle, atol=1e-12)
    assert np.allclose(moved.center, (8.0, 1.0, 0.0), atol=1e-12)
    assert moved.size == box.size


@given(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(-math.pi, math.pi),
    st.floats(-50, 50), st.floats(-50, 50), st.floats(-math.pi, math.pi),
)
def test_round_trip_center(x0, y0, a0, x1, y1, a1):
    box = Box3D((4.0, -3.0, 0.2), (1.5, 3.0, 1.0))
    src, dst = pose(x0, y0, a0), pose(x1, y1, a1)
    back = project_box_between_frames(project_box_between_frames(box, src, dst), dst, src)
    assert np.allclose(back.center, box.center, atol=1e-9)


@given(st.floats(-math.pi, math.pi))
def test_reprojection_never_shrinks_volume(yaw):
    box = Box3D((4.0, -3.0, 0.2), (1.5, 3.0, 1.0))
    out = project_box_between_frames(box, pose(), pose(1.0, 2.0, yaw))
    assert out.volume >= box.volume * (1 - 1e-12)


@pytest.mark.parametrize("quarter", range(4))
def test_quarter_turn_preserves_volume(quarter):
    box = Box3D((4.0, -3.0, 0.2), (1.5, 3.0, 1.0))
    out = project_box_between_frames(box, pose(), pose(0.0, 0.0, quarter * math.pi / 2))
    assert out.volume == pytest.approx(box.volume, rel=1e-6)


def test_pure_translation_preserves_volume_exactly():
    box = Box3D((4.0, -3.0, 0.2), (1.5, 3.0, 1.0))
    assert project_box_between_frames(box, pose(1.0), pose(3.5, -2.0)).size == box.size


def test_frame_to_frame_chain_order():
    src, dst = pose(1.0, 2.0, 0.3), pose(-4.0, 0.5, -1.1)
    p = np.array([3.0, 1.0, -0.5])
    world = src.lidar_to_global().apply(p)
    assert np.allclose(frame_to_frame(src, dst).apply(p), dst.lidar_to_global().inverse().apply(world), atol=1e-12)


# ---- overlap matrix


def test_overlap_matrix_examples():
    cur = [bounds([0, 0, 0], [1, 1, 1]), bounds([5, 5, 5], [6, 6, 6]), bounds([10, 0, 0], [11, 1, 1])]
    proj = [bounds([20, 0, 0], [21, 1, 1]), bounds([5, 5, 5], [6, 6, 6])]
    m = build_overlap_matrix(proj, cur)
    assert m.shape == (2, 3)
    assert m[1, 1] == 1.0
    assert np.count_nonzero(m) == 1


def test_overlap_matrix_disjoint_all_zero():
    cur = [bounds([i * 3, 0, 0], [i * 3 + 1, 1, 1]) for i in range(3)]
    proj = [bounds([i * 3 + 1.5, 0, 0], [i * 3 + 2, 1, 1]) for i in range(2)]
    assert not build_overlap_matrix(proj, cur).any()


# ---- temporal_update


def test_missed_detection_appended():
    cur = [bounds([5, 0, 0], [6, 1, 1])]
    nbr = [bounds([5, 0, 0], [6, 1, 1]), bounds([-8, 3, 0], [-7, 4, 1])]
    out = temporal_update(cur, nbr, pose(), pose())
    assert out == cur + [nbr[1]]


def test_neighbor_onto_empty_space_adds_one():
    cur = [bounds([5, 0, 0], [6, 1, 1]), bounds([9, 0, 0], [10, 1, 1])]
    out = temporal_update(cur, [bounds([-20, 0, 0], [-19, 1, 1])], pose(), pose())
    assert len(out) == len(cur) + 1


def test_near_overlap_no_action():
    cur = [bounds([5, 0, 0], [6.5, 1, 1]), bounds([9, 0, 0], [10, 1, 1])]
    out = temporal_update(cur, [bounds([5, 0, 0], [7, 1, 1])], pose(), pose())
    assert out == cur


def test_far_overlap_merged_into_envelope():
    cur = [bounds([39, -1, 0], [40.5, 1, 2], score=0.6)]
    nbr = [bounds([39, -1, 0], [41, 1, 2], score=0.9)]
    out = temporal_update(cur, nbr, pose(), pose())
    assert len(out) == 1
    assert np.allclose(out[0].lo, [39, -1, 0]) and np.allclose(out[0].hi, [41, 1, 2])
    assert out[0].score == 0.9


def test_far_merge_suppresses_swallowed_duplicate():
    env_part = bounds([39, -1, 0], [40.5, 1, 2], score=0.5)
    dup = bounds([39.2, -1, 0], [41, 1, 2], score=0.8)  # overlaps env_part; inside the envelope
    nbr = [bounds([39, -1, 0], [41, 1, 2], score=0.4)]
    out = temporal_update([env_part, dup], nbr, pose(), pose())
    assert len(out) == 1
    assert out[0].score == 0.8
    assert np.allclose(out[0].lo, [39, -1, 0]) and np.allclose(out[0].hi, [41, 1, 2])


def test_far_distance_configurable():
    cur = [bounds([39, -1, 0], [40.5, 1, 2])]
    nbr = [bounds([39, -1, 0], [41, 1, 2])]
    assert temporal_update(cur, nbr, pose(), pose(), TemporalConfig(far_distance=50.0)) == cur


def test_empty_current_takes_all_neighbors():
    nbr = [bounds([1, 0, 0], [2, 1, 1]), bounds([4, 0, 0], [5, 1, 1])]
    assert temporal_update([], nbr, pose(), pose()) == nbr


@st.composite
def scenes(draw):
    def box(far):
        r = draw(st.floats(31, 50)) if far else draw(st.floats(2, 28))
        a = draw(st.floats(0, 2 * math.pi))
        size = (draw(st.floats(0.5, 4)), draw(st.floats(0.5, 4)), draw(st.floats(0.5, 2)))
        return Box3D((r * math.cos(a), r * math.sin(a), 0.0), size, draw(st.floats(0.1, 1)))

    cur = [box(draw(st.booleans())) for _ in range(draw(st.integers(0, 6)))]
    nbr = [box(draw(st.booleans())) for _ in range(draw(st.integers(0, 6)))]
    return cur, nbr, draw(st.floats(-2, 2))


@given(scenes())
def test_update_covers_every_current_box(data):
    cur, nbr, dx = data
    out = temporal_update(cur, nbr, pose(), pose(dx))
    for b in cur:
        assert any(o == b or o.contains_box(b, 1e-9) for o in out)
    # current-derived boxes come first, recovered boxes are projected neighbours in order
    assert len(out) <= len(cur) + len(nbr)


@given(scenes())
def test_bidirectional_with_empty_neighbors_unchanged(data):
    cur, _, _ = data
    assert temporal_update_bidirectional(cur, [], [], (pose(), pose(), pose())) == cur
    assert temporal_update_bidirectional(cur, None, None, (None, pose(), None)) == cur


def test_bidirectional_single_side_equals_update():
    cur = [bounds([5, 0, 0], [6, 1, 1])]
    nxt = [bounds([-6, 2, 0], [-5, 3, 1])]
    poses = (None, pose(0.0), pose(1.0))
    assert temporal_update_bidirectional(cur, None, nxt, poses) == temporal_update(cur, nxt, pose(0.0), pose(1.0))


def test_bidirectional_recovers_from_both_sides():
    cur = [bounds([5, 0, 0], [6, 1, 1])]
    nxt = [bounds([-6, 2, 0], [-5, 3, 1])]
    prv = [bounds([12, -8, 0], [13, -7, 1])]
    out = temporal_update_bidirectional(cur, prv, nxt, (pose(-1.0), pose(0.0), pose(1.0)))
    assert len(out) == 3
    assert out[1] == project_box_between_frames(nxt[0], pose(1.0), pose(0.0))
    assert out[2] == project_box_between_frames(prv[0], pose(-1.0), pose(0.0))
