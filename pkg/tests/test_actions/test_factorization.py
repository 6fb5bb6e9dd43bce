import numpy as np
import pytest

from modules.Actions.Factorization import (
    compose,
    factorize,
    factorize_trajectory,
    frame_dims,
    input_dims,
    model_manifold,
    naive_velocities,
)
from modules.Manifold import Quaternion as quat
from utils.errors import ManifoldArgumentError


def test_pure_translation():
    f = factorize([0.0, 0.0, 0.02], quat.IDENTITY, quat.IDENTITY)
    np.testing.assert_allclose(f.lin_dir, [0.0, 0.0, 1.0])
    assert f.lin_mag == pytest.approx(0.02)
    assert f.valid_lin and not f.valid_ang


def test_rotation_axis_and_angle():
    q_next = quat.from_axis_angle([1.0, 0.0, 0.0], np.pi / 2)
    f = factorize(np.zeros(3), quat.IDENTITY, q_next)
    np.testing.assert_allclose(f.ang_dir, [1.0, 0.0, 0.0], atol=1e-12)
    assert f.ang_mag == pytest.approx(np.pi / 2)
    assert not f.valid_lin


def test_half_turn_angle_stays_in_range():
    f = factorize(np.zeros(3), quat.IDENTITY, np.array([0.0, 0.0, 1.0, 0.0]))
    assert f.ang_mag == pytest.approx(np.pi)
    np.testing.assert_allclose(np.abs(f.ang_dir), [0.0, 1.0, 0.0], atol=1e-12)


def test_small_motion_holds_previous_directions():
    prev_lin = np.array([1.0, 0.0, 0.0])
    prev_ang = np.array([0.0, 1.0, 0.0])
    f = factorize([1e-9, 0.0, 0.0], quat.IDENTITY, quat.IDENTITY, prev_lin, prev_ang)
    np.testing.assert_array_equal(f.lin_dir, prev_lin)
    np.testing.assert_array_equal(f.ang_dir, prev_ang)
    assert not f.valid_lin and not f.valid_ang


def test_compose_restores_the_step(rng):
    q_t = quat.random(rng)
    dq = quat.from_axis_angle(rng.normal(size=3), 0.3)
    q_next = quat.qmul(dq, q_t)
    x_dot = np.array([0.01, -0.02, 0.005])
    x_back, dq_back = compose(factorize(x_dot, q_t, q_next))
    np.testing.assert_allclose(x_back, x_dot, atol=1e-15)
    assert abs(np.dot(dq_back, dq)) == pytest.approx(1.0, abs=1e-12)


def test_compose_of_invalid_parts_is_a_no_op():
    x_dot, dq = compose(factorize(np.zeros(3), quat.IDENTITY, quat.IDENTITY))
    np.testing.assert_array_equal(x_dot, np.zeros(3))
    np.testing.assert_array_equal(dq, quat.IDENTITY)


def test_trajectory_factorization_carries_directions():
    positions = np.array([[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.01, 0.0, 0.0], [0.01, 0.02, 0.0]])
    quaternions = np.tile(quat.IDENTITY, (4, 1))
    out = factorize_trajectory(positions, quaternions)
    assert out["valid_lin"].tolist() == [True, False, True, False]
    np.testing.assert_array_equal(out["lin_dir"][1], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(out["lin_dir"][2], [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(out["lin_dir"][3], out["lin_dir"][2])
    assert out["lin_mag"][3] == 0.0


def test_naive_velocities_are_forward_differences():
    positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.1, 0.0]])
    quaternions = np.vstack([quat.IDENTITY, quat.from_axis_angle([0.0, 0.0, 1.0], 0.2)])
    lin, ang = naive_velocities(positions, quaternions)
    np.testing.assert_allclose(lin, [[0.0, 0.1, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(ang[0], [0.0, 0.0, 0.2], atol=1e-12)
    np.testing.assert_array_equal(ang[1], np.zeros(3))


@pytest.mark.parametrize(
    "F, driver, velocity, tangent_dim",
    [(1, "state", "factorized", 13), (1, "state", "naive", 13), (2, "time", "factorized", 14), (2, "state", "factorized", 23)],
)
def test_model_manifold_dimensions(F, driver, velocity, tangent_dim):
    assert model_manifold(F, driver, velocity).tangent_dim == tangent_dim


def test_frame_dims_pick_own_and_shared_factors():
    assert frame_dims(2, "time", 1) == [0, 3, 4, 5]
    assert frame_dims(2, "state", 0) == [0, 1, 2, 3, 8, 9, 10]
    assert input_dims("time") == [0]
    assert input_dims("state") == [0, 1]


def test_unknown_driver_is_rejected():
    with pytest.raises(ManifoldArgumentError):
        model_manifold(1, "phase")
    with pytest.raises(ManifoldArgumentError):
        model_manifold(0, "time")


def test_rotation_about_negative_axis_carries_the_sign_in_the_angle():
    dq = quat.from_axis_angle([0.0, 0.0, -1.0], 0.3)
    np.testing.assert_allclose(factorize(np.zeros(3), quat.IDENTITY, dq).ang_dir, [0.0, 0.0, -1.0], atol=1e-12)
    f = factorize(np.zeros(3), quat.IDENTITY, dq, signed=True)
    np.testing.assert_allclose(f.ang_dir, [0.0, 0.0, 1.0], atol=1e-12)
    assert f.ang_mag == pytest.approx(-0.3)
    _, dq_back = compose(f)
    assert abs(np.dot(dq_back, dq)) == pytest.approx(1.0, abs=1e-12)


def test_alternating_yaw_keeps_one_axis():
    yaw = np.array([0.0, 0.1, 0.0, 0.1])
    quaternions = quat.from_axis_angle(np.tile([0.0, 0.0, 1.0], (4, 1)), yaw)
    out = factorize_trajectory(np.zeros((4, 3)), quaternions, signed=True)
    np.testing.assert_allclose(out["ang_dir"], np.tile([0.0, 0.0, 1.0], (4, 1)), atol=1e-12)
    np.testing.assert_allclose(out["ang_mag"], [0.1, -0.1, 0.1, 0.0], atol=1e-12)


def test_leading_rest_takes_the_first_valid_direction():
    positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.02, 0.0, 0.0]])
    plain = factorize_trajectory(positions, np.tile(quat.IDENTITY, (4, 1)))
    np.testing.assert_array_equal(plain["lin_dir"][0], [0.0, 0.0, 1.0])
    out = factorize_trajectory(positions, np.tile(quat.IDENTITY, (4, 1)), backfill=True)
    assert out["valid_lin"].tolist() == [False, True, True, False]
    np.testing.assert_allclose(out["lin_dir"][0], [1.0, 0.0, 0.0])
    assert out["lin_mag"][0] == 0.0
    np.testing.assert_array_equal(out["ang_dir"], np.tile([0.0, 0.0, 1.0], (4, 1)))


def test_magnitudes_do_not_depend_on_the_observing_frame(rng):
    T = 12
    positions = np.cumsum(rng.normal(scale=0.01, size=(T, 3)), axis=0)
    quaternions = np.empty((T, 4))
    quaternions[0] = quat.random(rng)
    for t in range(1, T):
        step = quat.from_axis_angle(rng.normal(size=3), rng.uniform(0.01, 0.2))
        quaternions[t] = quat.qmul(step, quaternions[t - 1])
    r = quat.random(rng)
    offset = rng.normal(size=3)
    moved = factorize_trajectory(quat.rotate(r, positions) + offset, quat.qmul(r, quaternions))
    base = factorize_trajectory(positions, quaternions)
    np.testing.assert_allclose(moved["lin_mag"], base["lin_mag"], atol=1e-12)
    np.testing.assert_allclose(moved["ang_mag"], base["ang_mag"], atol=1e-9)
    assert np.all(base["ang_mag"] >= 0.0)
