import numpy as np
import pytest

from modules.Manifold import Quaternion as quat
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet, FrameInstance
from utils.errors import ManifoldArgumentError, MissingFrameError


def test_local_and_world_are_inverse(rng):
    frame = FrameInstance(quat.random(rng), rng.normal(size=3), "object")
    points = rng.normal(size=(10, 3))
    np.testing.assert_allclose(frame.to_world(frame.to_local(points)), points, atol=1e-12)


def test_compose_with_inverse_is_identity(rng):
    frame = FrameInstance(quat.random(rng), rng.normal(size=3), "object")
    identity = frame.compose(frame.inverse())
    assert abs(np.dot(identity.rotation, quat.IDENTITY)) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(identity.origin, np.zeros(3), atol=1e-12)


def test_rotation_must_be_unit():
    with pytest.raises(ManifoldArgumentError):
        FrameInstance([2.0, 0.0, 0.0, 0.0], np.zeros(3))
    with pytest.raises(ManifoldArgumentError):
        FrameInstance(quat.IDENTITY, np.zeros(2))


def test_missing_frame_names_demo():
    demo = Demonstration(np.arange(2.0), np.tile([0, 0, 0, 1, 0, 0, 0], (2, 1)), np.zeros(2), {"world": FrameInstance.identity()})
    demos = DemonstrationSet(0.05, [demo])
    with pytest.raises(MissingFrameError) as e:
        demos.frames_of(0, ["world", "object"])
    assert e.value.demo_index == 0
    assert e.value.frame_id == "object"
    assert "demo 0" in str(e.value)


def test_common_frame_ids():
    pose = np.tile([0, 0, 0, 1, 0, 0, 0], (2, 1))
    a = Demonstration(np.arange(2.0), pose, np.zeros(2), {"world": FrameInstance.identity(), "object": FrameInstance.identity("object")})
    b = Demonstration(np.arange(2.0), pose, np.zeros(2), {"world": FrameInstance.identity()})
    assert DemonstrationSet(0.05, [a, b]).frame_ids() == ["world"]
