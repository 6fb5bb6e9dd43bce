import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from modules.Manifold import Quaternion as quat
from utils.errors import ManifoldArgumentError


def test_qmul_with_conjugate_is_identity(rng):
    q = quat.random(rng, 10)
    np.testing.assert_allclose(quat.qmul(q, quat.qconj(q)), np.tile(quat.IDENTITY, (10, 1)), atol=1e-12)


def test_to_matrix_matches_scipy(rng):
    q = quat.random(rng)
    expected = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
    np.testing.assert_allclose(quat.to_matrix(q), expected, atol=1e-12)


def test_from_matrix_returns_nonnegative_real_part(rng):
    q = quat.random(rng, 20)
    back = quat.from_matrix(quat.to_matrix(q))
    assert np.all(back[:, 0] >= 0)
    np.testing.assert_allclose(np.abs(np.sum(back * q, axis=1)), 1.0, atol=1e-9)


def test_rotate_matches_matrix(rng):
    q = quat.random(rng)
    v = rng.normal(size=3)
    np.testing.assert_allclose(quat.rotate(q, v), quat.to_matrix(q) @ v, atol=1e-12)


def test_axis_angle_is_in_zero_to_pi():
    q = quat.from_axis_angle([0.0, 0.0, 1.0], 1.5 * np.pi)
    axis, angle = quat.to_axis_angle(q)
    assert angle == pytest.approx(0.5 * np.pi)
    np.testing.assert_allclose(axis, [0.0, 0.0, -1.0], atol=1e-12)


def test_rotvec_round_trip():
    rotvec = np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(quat.to_rotvec(quat.from_rotvec(rotvec)), rotvec, atol=1e-12)


def test_slerp_hits_endpoints_exactly(rng):
    q0, q1 = quat.random(rng), quat.random(rng)
    if np.dot(q0, q1) < 0:
        q1 = -q1
    out = quat.slerp(q0, q1, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_array_equal(out[0], q0)
    np.testing.assert_array_equal(out[-1], q1)
    assert np.linalg.norm(out[1]) == pytest.approx(1.0)


def test_slerp_midpoint_halves_the_angle():
    q1 = quat.from_axis_angle([1.0, 0.0, 0.0], 1.0)
    mid = quat.slerp(quat.IDENTITY, q1, 0.5)
    np.testing.assert_allclose(mid, quat.from_axis_angle([1.0, 0.0, 0.0], 0.5), atol=1e-12)


def test_make_continuous_flips_signs():
    q = np.array([0.6, 0.8, 0.0, 0.0])
    out = quat.make_continuous([q, -q, q])
    np.testing.assert_allclose(out, np.tile(q, (3, 1)))


def test_check_unit_rejects_non_unit():
    with pytest.raises(ManifoldArgumentError):
        quat.check_unit([1.01, 0.0, 0.0, 0.0])
