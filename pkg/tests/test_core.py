import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from semantic_mapping.core import (
    CameraIntrinsics, ClassSet, Frame, InvalidDepthError, InvalidPose, InvalidScore, Kind, NegativeDepth,
    NonFiniteDepth, PanopticInstance, Pose, ShapeMismatch, UnknownCategory, UnknownInstanceId, backproject,
    backproject_image, project, validate_frame,
)

from conftest import plane_frame, small_intrinsics, thing

INTR = CameraIntrinsics(500.0, 480.0, 320.0, 240.0, 640, 480)


def test_backproject_principal_ray():
    assert np.allclose(backproject((320.0, 240.0), 1.0, INTR, Pose.identity()), [0, 0, 1])


def test_backproject_translated_pose():
    pose = Pose(np.eye(3), [1.0, 0.0, 0.0])
    assert np.allclose(backproject((320.0, 240.0), 2.0, INTR, pose), [1, 0, 2])


def test_backproject_one_focal_length_off_axis():
    assert np.allclose(backproject((320.0 + 500.0, 240.0), 1.0, INTR, Pose.identity()), [1, 0, 1])


@pytest.mark.parametrize("d", [0.0, -1.0, np.nan, np.inf])
def test_backproject_rejects_bad_depth(d):
    with pytest.raises(InvalidDepthError):
        backproject((1, 1), d, INTR, Pose.identity())


def test_backproject_image_matches_pointwise():
    intr = small_intrinsics()
    rng = np.random.default_rng(0)
    depth = rng.uniform(0.5, 2.0, intr.shape)
    pose = Pose(Rotation.from_euler("xyz", [10, -20, 30], degrees=True).as_matrix(), [0.1, 0.2, -0.3])
    pts = backproject_image(depth, intr, pose)
    for v, u in [(0, 0), (5, 17), (29, 39)]:
        assert np.allclose(pts[v, u], backproject((u, v), depth[v, u], intr, pose))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 4, 4)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1.0, 5.0, 1.0, 4, 4)


def test_quaternion_round_trip():
    for q in Rotation.random(20, random_state=1).as_quat():
        pose = Pose.from_quaternion([1, 2, 3], q)
        back = pose.quaternion()
        assert np.allclose(back, q) or np.allclose(back, -q)
        assert pose.is_valid()


def test_well_formed_frame_has_no_violations():
    f = plane_frame(mask=np.ones((30, 40), int), instances=[thing(1)])
    assert validate_frame(f) == []


def test_unknown_instance_id_reported():
    mask = np.zeros((30, 40), int)
    mask[3, 3] = 7
    assert validate_frame(plane_frame(mask=mask)) == [UnknownInstanceId(7)]


def test_nan_depth_reported():
    f = plane_frame()
    f.depth[4, 9] = np.nan
    assert validate_frame(f) == [NonFiniteDepth((9, 4))]


def test_other_violations():
    f = plane_frame(instances=[thing(1, score=1.5), PanopticInstance(2, 9, Kind.STUFF)])
    f.depth[0, 1] = -1.0
    v = validate_frame(f, {4: Kind.THING})
    assert NegativeDepth((1, 0)) in v
    assert InvalidScore(1, 1.5) in v
    assert UnknownCategory(2, 9) in v

    bad = Frame(np.ones((3, 3)), np.zeros((2, 3), int), [], Pose(2 * np.eye(3), np.zeros(3)), small_intrinsics())
    v = validate_frame(bad)
    assert any(isinstance(x, ShapeMismatch) for x in v)
    assert any(isinstance(x, InvalidPose) for x in v)


def test_class_set_reserves_background():
    with pytest.raises(ValueError):
        ClassSet({0: "bg"}, {0: Kind.STUFF})
    cs = ClassSet({1: "wall", 4: "box"}, {1: Kind.STUFF, 4: Kind.THING})
    assert cs.things == {4} and cs.stuff == {1}


# ------------------------------------------------------------------ properties
finite = st.floats(-5, 5, allow_nan=False)
angles = st.tuples(st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180))


def _pose(a, t):
    return Pose(Rotation.from_euler("zyx", a, degrees=True).as_matrix(), t)


@given(u=st.floats(0, 639), v=st.floats(0, 479), d=st.floats(0.05, 20), a=angles, t=st.tuples(finite, finite, finite))
def test_project_inverts_backproject(u, v, d, a, t):
    pose = _pose(a, t)
    pu, pv, pd = project(backproject((u, v), d, INTR, pose), INTR, pose)
    assert np.allclose([pu, pv, pd], [u, v, d], rtol=1e-9, atol=1e-9)


@settings(max_examples=50)
@given(a=st.lists(angles, min_size=3, max_size=3), t=st.lists(st.tuples(finite, finite, finite), min_size=3,
                                                            max_size=3))
def test_pose_composition(a, t):
    p, q, r = (_pose(x, y) for x, y in zip(a, t))
    left = p.compose(q).compose(r)
    right = p.compose(q.compose(r))
    assert np.allclose(left.matrix(), right.matrix(), atol=1e-9)
    ident = p.compose(p.inverse())
    assert np.allclose(ident.matrix(), np.eye(4), atol=1e-9)
