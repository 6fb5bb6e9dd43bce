import numpy as np
import pytest

from modules.Gaussian.RiemannianGaussian import (
    RiemannianGaussian,
    condition,
    fit,
    kl_closed_form,
    kl_monte_carlo,
    log_pdf,
    marginal,
    mle_mean,
    product,
    regularize_post_transport,
    sample,
    transform,
)
from modules.Manifold import Quaternion as quat
from modules.Manifold.Manifold import Euclid, ManifoldDescriptor, QuaternionFactor, Sphere2
from modules.TaskParameterized.Frames import FrameInstance
from utils.errors import ConvergenceError, ManifoldArgumentError, RegularizationWarning


def euclid(n):
    return ManifoldDescriptor(tuple(Euclid(label=f"x{i}") for i in range(n)))


def test_log_pdf_of_standard_normal():
    g = RiemannianGaussian(euclid(1), np.zeros(1), np.eye(1))
    assert log_pdf(g, [0.0]) == pytest.approx(-0.918939, abs=1e-6)


def test_mean_shape_is_checked():
    with pytest.raises(ManifoldArgumentError):
        RiemannianGaussian(euclid(2), np.zeros(3), np.eye(2))


def test_euclidean_mean_is_weighted_average():
    points = np.array([[0.0, 0.0], [2.0, 4.0]])
    np.testing.assert_allclose(mle_mean(euclid(2), points, [1.0, 3.0]), [1.5, 3.0])


def test_mean_of_symmetric_quaternions(s3):
    center = quat.from_axis_angle([0.0, 1.0, 0.0], 0.7)
    tangents = np.array([[0.2, 0.0, 0.0], [-0.2, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, -0.1, 0.0]])
    points = s3.exp_many(center, tangents)
    np.testing.assert_allclose(mle_mean(s3, points, init=points[0]), center, atol=1e-8)


def test_mean_raises_when_iterations_run_out(s3):
    points = np.vstack([s3.exp(quat.IDENTITY, [0.5, 0.0, 0.0]), s3.exp(quat.IDENTITY, [0.0, 0.5, 0.0]), quat.IDENTITY])
    with pytest.raises(ConvergenceError) as e:
        mle_mean(s3, points, max_iter=1)
    assert e.value.last_iterate.shape == (4,)
    assert e.value.residual > 0


def test_fit_recovers_sample_moments(rng):
    points = rng.normal([1.0, -1.0], [0.5, 2.0], size=(20000, 2))
    g = fit(euclid(2), points, epsilon=0.0)
    np.testing.assert_allclose(g.mean, [1.0, -1.0], atol=0.05)
    np.testing.assert_allclose(np.diag(g.cov), [0.25, 4.0], rtol=0.05)


def test_condition_matches_closed_form():
    g = RiemannianGaussian(euclid(2), np.array([1.0, 2.0]), np.array([[2.0, 1.0], [1.0, 2.0]]))
    c = condition(g, [0], [3.0])
    assert c.mean[0] == pytest.approx(3.0)
    assert c.cov[0, 0] == pytest.approx(1.5)


def test_condition_on_every_factor_fails():
    g = RiemannianGaussian(euclid(2), np.zeros(2), np.eye(2))
    with pytest.raises(ManifoldArgumentError):
        condition(g, [0, 1], [0.0, 0.0])


def test_condition_regularizes_singular_input_block():
    g = RiemannianGaussian(euclid(2), np.zeros(2), np.diag([0.0, 1.0]))
    with pytest.warns(RegularizationWarning):
        c = condition(g, [0], [0.0])
    assert np.isfinite(c.mean).all()


def test_condition_on_pose_returns_orientation(pose_manifold):
    mean = np.concatenate([[0.1, 0.2, 0.3], quat.from_axis_angle([0.0, 0.0, 1.0], 0.4)])
    g = RiemannianGaussian(pose_manifold, mean, np.eye(6) * 0.01)
    c = condition(g, [0], mean[:3])
    np.testing.assert_allclose(c.mean, mean[3:], atol=1e-9)
    np.testing.assert_allclose(c.cov, np.eye(3) * 0.01, atol=1e-12)


def test_marginal_selects_blocks(pose_manifold):
    cov = np.diag(np.arange(1.0, 7.0))
    g = RiemannianGaussian(pose_manifold, np.concatenate([np.zeros(3), quat.IDENTITY]), cov)
    m = marginal(g, [1])
    np.testing.assert_allclose(m.cov, np.diag([4.0, 5.0, 6.0]))
    np.testing.assert_allclose(m.mean, quat.IDENTITY)


def test_euclidean_product():
    a = RiemannianGaussian(euclid(1), np.zeros(1), np.eye(1))
    b = RiemannianGaussian(euclid(1), np.array([2.0]), np.eye(1))
    p = product([a, b])
    assert p.mean[0] == pytest.approx(1.0)
    assert p.cov[0, 0] == pytest.approx(0.5)


def test_product_of_identical_quaternion_gaussians(s3):
    g = RiemannianGaussian(s3, quat.from_axis_angle([1.0, 0.0, 0.0], 0.3), np.diag([0.01, 0.02, 0.03]))
    p = product([g, g])
    np.testing.assert_allclose(p.mean, g.mean, atol=1e-12)
    np.testing.assert_allclose(p.cov, g.cov / 2, atol=1e-12)


def test_product_of_quaternion_gaussians_lies_between_means(s3):
    a = RiemannianGaussian(s3, quat.IDENTITY, np.eye(3) * 0.01)
    b = RiemannianGaussian(s3, quat.from_axis_angle([0.0, 0.0, 1.0], 0.4), np.eye(3) * 0.01)
    p = product([a, b])
    np.testing.assert_allclose(p.mean, quat.from_axis_angle([0.0, 0.0, 1.0], 0.2), atol=1e-8)


def test_transform_rotates_mean_and_covariance(pose_manifold):
    mean = np.concatenate([[1.0, 0.0, 0.0], quat.IDENTITY])
    cov = np.diag([0.01, 0.04, 0.09, 0.001, 0.001, 0.001])
    frame = FrameInstance(quat.from_axis_angle([0.0, 0.0, 1.0], np.pi / 2), [0.0, 0.0, 1.0])
    g = transform(RiemannianGaussian(pose_manifold, mean, cov), frame)
    np.testing.assert_allclose(g.mean[:3], [0.0, 1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(g.mean[3:], frame.rotation, atol=1e-12)
    np.testing.assert_allclose(g.cov[:3, :3], np.diag([0.04, 0.01, 0.09]), atol=1e-12)


def test_transform_then_inverse_restores_mean(pose_manifold, rng):
    mean = np.concatenate([rng.normal(size=3), quat.random(rng)])
    g = RiemannianGaussian(pose_manifold, mean, np.eye(6) * 0.01)
    frame = FrameInstance(quat.random(rng), rng.normal(size=3))
    back = transform(transform(g, frame), frame.inverse())
    np.testing.assert_allclose(back.mean[:3], mean[:3], atol=1e-9)
    assert abs(np.dot(back.mean[3:], mean[3:])) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(back.cov, g.cov, atol=1e-9)


def test_block_regularization_keeps_clean_covariance(pose_manifold):
    cov = np.diag([1.0, 2.0, 3.0, 0.1, 0.2, 0.3])
    cov[0, 1] = cov[1, 0] = 0.5
    np.testing.assert_array_equal(regularize_post_transport(cov, pose_manifold, "block"), cov)


def test_block_regularization_decorrelates_rotation(pose_manifold):
    cov = np.eye(6)
    cov[3, 4] = cov[4, 3] = 0.5
    cov[0, 3] = cov[3, 0] = 0.5
    out = regularize_post_transport(cov, pose_manifold, "block")
    np.testing.assert_array_equal(out, np.eye(6))


def test_floor_is_applied(pose_manifold):
    out = regularize_post_transport(np.zeros((6, 6)), pose_manifold, "block", epsilon=1e-6)
    assert np.linalg.eigvalsh(out).min() >= 1e-6 - 1e-18


def test_no_regularization_returns_input(pose_manifold):
    cov = np.eye(6) + 0.1
    np.testing.assert_array_equal(regularize_post_transport(cov, pose_manifold, "none"), cov)


def test_sample_stays_on_the_manifold(pose_manifold, rng):
    g = RiemannianGaussian(pose_manifold, np.concatenate([np.zeros(3), quat.IDENTITY]), np.eye(6) * 0.1)
    points = sample(g, 50, rng)
    assert points.shape == (50, 7)
    np.testing.assert_allclose(np.linalg.norm(points[:, 3:], axis=1), 1.0, atol=1e-12)


def test_kl_of_identical_gaussians_is_zero(s3):
    g = RiemannianGaussian(s3, quat.IDENTITY, np.eye(3) * 0.05)
    assert kl_monte_carlo(g, g, n=500) == pytest.approx(0.0, abs=1e-12)


def test_monte_carlo_kl_matches_closed_form():
    p = RiemannianGaussian(euclid(2), np.zeros(2), np.eye(2))
    q = RiemannianGaussian(euclid(2), np.array([1.0, 0.0]), 2.0 * np.eye(2))
    assert kl_monte_carlo(p, q, n=20000, seed=3) == pytest.approx(kl_closed_form(p, q), abs=0.03)


def test_monte_carlo_kl_is_deterministic_per_seed(s3):
    p = RiemannianGaussian(s3, quat.IDENTITY, np.eye(3) * 0.05)
    q = RiemannianGaussian(s3, quat.from_axis_angle([1.0, 0.0, 0.0], 0.3), np.eye(3) * 0.1)
    assert kl_monte_carlo(p, q, n=1000, seed=7) == kl_monte_carlo(p, q, n=1000, seed=7)
    assert kl_monte_carlo(p, q, n=1000, seed=7) > 0


def test_within_regularization_keeps_cross_factor_terms(pose_manifold):
    cov = np.eye(6)
    cov[0, 1] = cov[1, 0] = 0.2
    cov[0, 3] = cov[3, 0] = 0.3
    cov[3, 4] = cov[4, 3] = 0.4
    out = regularize_post_transport(cov, pose_manifold, "within")
    assert out[0, 1] == 0.2
    assert out[0, 3] == 0.3
    assert out[3, 4] == 0.0
    np.testing.assert_array_equal(np.diag(out), np.ones(6))


def test_mean_from_the_extrinsic_start_converges_quickly(s3):
    center = quat.from_axis_angle([0.3, -0.2, 1.0], 1.1)
    tangents = np.array([[0.05, 0.0, 0.01], [-0.02, 0.04, 0.0], [0.0, -0.03, 0.02], [0.01, 0.0, -0.04]])
    points = s3.exp_many(center, tangents)
    quick = mle_mean(s3, points, max_iter=4)
    np.testing.assert_allclose(quick, mle_mean(s3, points), atol=1e-9)


def test_transform_is_equivariant_under_a_world_rotation(rng):
    m = ManifoldDescriptor((Euclid(label="pos", policy="full", n=3), QuaternionFactor(label="rot"), Sphere2(label="dir")))
    direction = rng.normal(size=3)
    mean = np.concatenate([rng.normal(size=3), quat.random(rng), direction / np.linalg.norm(direction)])
    A = rng.normal(size=(8, 8))
    g = RiemannianGaussian(m, mean, 0.01 * (A @ A.T) + 1e-3 * np.eye(8))
    frame = FrameInstance(quat.random(rng), rng.normal(size=3))
    turn = FrameInstance(quat.random(rng), np.zeros(3))
    stepwise = transform(transform(g, frame, "none"), turn, "none")
    direct = transform(g, turn.compose(frame), "none")
    np.testing.assert_allclose(stepwise.mean, direct.mean, atol=1e-9)
    np.testing.assert_allclose(stepwise.cov, direct.cov, atol=1e-9)


def test_product_does_not_depend_on_the_order(pose_manifold, rng):
    gs = []
    for scale in (0.01, 0.02, 0.04):
        mean = np.concatenate([rng.normal(0.0, 0.05, 3), quat.from_rotvec(rng.normal(0.0, 0.1, 3))])
        A = rng.normal(size=(6, 6))
        gs.append(RiemannianGaussian(pose_manifold, mean, scale * (np.eye(6) + 0.1 * A @ A.T)))
    reference = product(gs)
    for order in ([2, 0, 1], [1, 2, 0]):
        p = product([gs[i] for i in order])
        np.testing.assert_allclose(p.mean, reference.mean, atol=1e-7)
        np.testing.assert_allclose(p.cov, reference.cov, atol=1e-7)
