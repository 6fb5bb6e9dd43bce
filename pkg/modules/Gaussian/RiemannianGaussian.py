"""
Gaussians on Riemannian manifolds.

A :class:`RiemannianGaussian` stores its mean as a manifold point and its
covariance in tangent coordinates at the mean (see
:mod:`modules.Manifold.Manifold` for the frame convention).
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import param
from scipy import linalg
from scipy.stats import multivariate_normal

from modules.Manifold.Manifold import Euclid, ManifoldDescriptor, parallel_transport
from utils import globals as defaults
from utils.PipelineClasses import ConfigBase
from utils.errors import (
    ConvergenceError,
    ManifoldArgumentError,
    RegularizationWarning,
    SingularityError,
)


class RegularizationConfig(ConfigBase):
    """
    How covariances are repaired after a frame transformation.

    ``block`` keeps correlations among Euclidean coordinates and decorrelates
    every manifold tangent coordinate; ``factor`` only zeroes the blocks
    coupling a manifold factor with any other factor; ``within`` only zeroes
    the off-diagonal entries inside each manifold factor and keeps every
    coupling between factors; ``diagonal`` adds ``epsilon`` to the diagonal;
    ``none`` leaves the covariance alone.

    State-driven skills regress velocities on the pose, so they are adapted
    with ``state_policy``, which must keep the pose-velocity couplings.
    """

    policy = param.Selector(
        default=defaults.DEFAULT_REGULARIZATION,
        objects=defaults.REGULARIZATION_POLICIES,
        doc="Post-transport regularization policy of time-driven skills",
    )
    state_policy = param.Selector(
        default=defaults.DEFAULT_STATE_REGULARIZATION,
        objects=defaults.REGULARIZATION_POLICIES,
        doc="Post-transport regularization policy of state-driven skills",
    )
    epsilon = param.Number(
        default=defaults.REGULARIZATION_FLOOR, bounds=(0, None), inclusive_bounds=(False, True),
        doc="Eigenvalue floor",
    )


@dataclass(frozen=True, eq=False)
class RiemannianGaussian:
    manifold: ManifoldDescriptor
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        d = self.manifold.tangent_dim
        if mean.shape != (self.manifold.ambient_dim,):
            raise ManifoldArgumentError(
                f"mean has shape {mean.shape}, manifold expects ({self.manifold.ambient_dim},)"
            )
        if cov.shape != (d, d):
            raise ManifoldArgumentError(f"covariance has shape {cov.shape}, expected ({d}, {d})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.ravel().tolist()}

    @classmethod
    def from_dict(cls, manifold: ManifoldDescriptor, values: dict) -> "RiemannianGaussian":
        d = manifold.tangent_dim
        return cls(manifold, np.asarray(values["mean"], dtype=float), np.reshape(values["cov"], (d, d)))


def symmetrize(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    return 0.5 * (cov + cov.T)


def log_pdf_many(g: RiemannianGaussian, points) -> np.ndarray:
    """
    Log density at every row of ``points``.

    Raises:
        SingularityError: A point lies on the cut locus of the mean.
    """
    tangents = g.manifold.log_many(g.mean, points)
    return np.atleast_1d(multivariate_normal.logpdf(tangents, cov=g.cov))


def log_pdf(g: RiemannianGaussian, point) -> float:
    """
    Log density of ``point``: the tangent-space normal density at ``Log_μ(point)``.

    Example:
        >>> g = RiemannianGaussian(ManifoldDescriptor((Euclid(n=1),)), np.zeros(1), np.eye(1))
        >>> round(log_pdf(g, [0.0]), 6)
        -0.918939
    """
    return float(log_pdf_many(g, np.atleast_2d(point))[0])


def sample(g: RiemannianGaussian, n: int, rng: np.random.Generator) -> np.ndarray:
    tangents = rng.multivariate_normal(np.zeros(g.manifold.tangent_dim), g.cov, size=n, method="cholesky")
    return g.manifold.exp_many(g.mean, tangents)


def mle_mean(
    manifold: ManifoldDescriptor,
    points,
    weights=None,
    init=None,
    max_iter: int = defaults.MLE_MAX_ITER,
    tol: float = defaults.MLE_TOLERANCE,
) -> np.ndarray:
    """
    Weighted Fréchet mean by fixed-point iteration in the tangent space.

    Starting from ``init`` (the normalized extrinsic mean when omitted) each
    iteration takes the weighted mean of the log-mapped points and moves the
    estimate along it with the exponential map.

    Args:
        manifold (ManifoldDescriptor): Manifold of the points.
        points (array-like): (N, ambient_dim) samples.
        weights (array-like, optional): Nonnegative weights, uniform when omitted.
        init (array-like, optional): Starting estimate.
        max_iter (int): Iteration limit.
        tol (float): Convergence threshold on the tangent mean's norm.

    Returns:
        numpy.ndarray: The mean point.

    Exceptions:
        ConvergenceError: The tangent residual is still above ``tol`` after
            ``max_iter`` iterations. Carries the last iterate and residual.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if weights is None:
        weights = np.ones(len(points))
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ManifoldArgumentError("weights must be nonnegative with a positive sum")
    weights = weights / weights.sum()

    if manifold.is_euclidean():
        return weights @ points

    x = manifold.extrinsic_mean(points, weights) if init is None else np.asarray(init, dtype=float)
    residual = np.inf
    for iteration in range(max_iter):
        step = weights @ manifold.log_many(x, points)
        residual = float(np.linalg.norm(step))
        if residual <= tol:
            return x
        x = manifold.exp(x, step)
    step = weights @ manifold.log_many(x, points)
    residual = float(np.linalg.norm(step))
    if residual <= tol:
        return x
    raise ConvergenceError(
        f"mean estimate did not converge in {max_iter} iterations (residual {residual:.3g})",
        last_iterate=x,
        residual=residual,
        iterations=max_iter,
    )


def tangent_covariance(manifold: ManifoldDescriptor, mean, points, weights=None) -> np.ndarray:
    """
    Weighted second moment of ``points`` in the tangent space at ``mean``.
    """
    tangents = manifold.log_many(mean, points)
    if weights is None:
        weights = np.ones(len(tangents))
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    return symmetrize((tangents * weights[:, None]).T @ tangents)


def fit(manifold: ManifoldDescriptor, points, weights=None, epsilon: float = defaults.REGULARIZATION_FLOOR, init=None):
    """Fit a Gaussian by MLE mean plus floored tangent covariance."""
    mean = mle_mean(manifold, points, weights, init=init)
    cov = tangent_covariance(manifold, mean, points, weights) + epsilon * np.eye(manifold.tangent_dim)
    return RiemannianGaussian(manifold, mean, cov)


def marginal(g: RiemannianGaussian, dims: Sequence[int]) -> RiemannianGaussian:
    dims = list(dims)
    sub = g.manifold.sub(dims)
    a = g.manifold.ambient_index(dims)
    t = g.manifold.tangent_index(dims)
    return RiemannianGaussian(sub, g.mean[a], g.cov[np.ix_(t, t)])


def _solve_input_block(S_ii, S_oi, epsilon):
    try:
        factor = linalg.cho_factor(S_ii)
    except linalg.LinAlgError:
        warnings.warn(
            f"input covariance block is singular; adding {epsilon:g} to its diagonal",
            RegularizationWarning,
        )
        factor = linalg.cho_factor(S_ii + epsilon * np.eye(len(S_ii)))
    return linalg.cho_solve(factor, S_oi.T).T


def condition(
    g: RiemannianGaussian,
    in_dims: Sequence[int],
    value,
    max_iter: int = defaults.CONDITION_MAX_ITER,
    tol: float = defaults.CONDITION_TOLERANCE,
    epsilon: float = defaults.REGULARIZATION_FLOOR,
) -> RiemannianGaussian:
    """
    Conditional distribution of the remaining factors given ``value`` on ``in_dims``.

    The linear-Gaussian conditioning formulas are applied in the tangent space
    at the current estimate ``(value, x_out)`` and the estimate is moved with
    the exponential map until the update is below ``tol``. On Euclidean
    manifolds the first iteration is already the exact closed form.

    Args:
        g (RiemannianGaussian): Joint Gaussian.
        in_dims (list of int): Factor indices that are observed.
        value (array-like): Ambient coordinates of the observed factors.

    Returns:
        RiemannianGaussian: Gaussian over the complementary factors, in order.

    Exceptions:
        SingularityError: ``value`` lies on the cut locus of the mean.
        ManifoldArgumentError: ``in_dims`` does not leave any output factor.
    """
    m = g.manifold
    in_dims = list(in_dims)
    out_dims = [d for d in range(len(m)) if d not in in_dims]
    if not out_dims:
        raise ManifoldArgumentError("conditioning on every factor leaves nothing to predict")
    m.sub(in_dims)
    ai, ao = m.ambient_index(in_dims), m.ambient_index(out_dims)
    ti, to = m.tangent_index(in_dims), m.tangent_index(out_dims)
    out_manifold = m.sub(out_dims)

    value = np.asarray(value, dtype=float)
    if value.shape != (len(ai),):
        raise ManifoldArgumentError(f"input has shape {value.shape}, expected ({len(ai)},)")

    x_hat = g.mean.copy()
    x_hat[ai] = value
    converged = False
    for _ in range(max_iter):
        offset = m.log(x_hat, g.mean)
        S = parallel_transport(m, g.cov, g.mean, x_hat)
        gain = _solve_input_block(S[np.ix_(ti, ti)], S[np.ix_(to, ti)], epsilon)
        delta = offset[to] - gain @ offset[ti]
        x_hat[ao] = out_manifold.exp(x_hat[ao], delta)
        if np.linalg.norm(delta) <= tol:
            converged = True
            break

    # after a converged step the estimate moved by at most tol
    if not converged:
        S = parallel_transport(m, g.cov, g.mean, x_hat)
        gain = _solve_input_block(S[np.ix_(ti, ti)], S[np.ix_(to, ti)], epsilon)
    cov = S[np.ix_(to, to)] - gain @ S[np.ix_(ti, to)]
    return RiemannianGaussian(out_manifold, x_hat[ao], symmetrize(cov))


def _clip_spectrum(block, epsilon):
    w, V = np.linalg.eigh(symmetrize(block))
    if w.min() >= epsilon:
        return block
    return symmetrize((V * np.maximum(w, epsilon)) @ V.T)


def regularize_post_transport(
    cov,
    manifold: ManifoldDescriptor,
    policy: str = defaults.DEFAULT_REGULARIZATION,
    epsilon: float = defaults.REGULARIZATION_FLOOR,
) -> np.ndarray:
    """
    Remove spurious correlations a frame transformation introduces.

    Args:
        cov (numpy.ndarray): Symmetric tangent covariance.
        manifold (ManifoldDescriptor): Manifold the covariance belongs to.
        policy (str): ``"none"``, ``"diagonal"``, ``"factor"``, ``"within"``
            or ``"block"``.
        epsilon (float): Eigenvalue floor.

    Returns:
        numpy.ndarray: Regularized covariance. Under ``block`` an input that is
        already decorrelated and above the floor is returned unchanged.
    """
    cov = symmetrize(cov)
    if policy == "none":
        return cov
    if policy == "diagonal":
        return cov + epsilon * np.eye(len(cov))
    if policy == "factor":
        keep = np.zeros_like(cov, dtype=bool)
        euclid = manifold.euclidean_tangent_mask()
        keep[np.ix_(euclid, euclid)] = True
        for s in manifold.tangent_slices:
            keep[s, s] = True
        return _clip_spectrum(np.where(keep, cov, 0.0), epsilon)
    if policy == "within":
        keep = np.ones_like(cov, dtype=bool)
        for f, s in zip(manifold.factors, manifold.tangent_slices):
            if not isinstance(f, Euclid):
                keep[s, s] = np.eye(s.stop - s.start, dtype=bool)
        return _clip_spectrum(np.where(keep, cov, 0.0), epsilon)
    if policy == "block":
        euclid = manifold.euclidean_tangent_mask()
        out = np.diag(np.maximum(np.diag(cov), epsilon))
        if euclid.any():
            out[np.ix_(euclid, euclid)] = _clip_spectrum(cov[np.ix_(euclid, euclid)], epsilon)
        return out
    raise ValueError(f"unknown regularization policy '{policy}'")


def transform(
    g: RiemannianGaussian,
    frame,
    policy: str = defaults.DEFAULT_REGULARIZATION,
    epsilon: float = defaults.REGULARIZATION_FLOOR,
) -> RiemannianGaussian:
    """
    Map a frame-local Gaussian to world coordinates.

    Each factor follows its transform policy. The covariance is carried by the
    differential of the frame action, then regularized. For S² factors the
    differential is the rotation at the origin composed with the parallel
    transport from the surrogate base ``q e q⁻¹`` to the image of the mean.

    Args:
        g (RiemannianGaussian): Gaussian in frame coordinates.
        frame: Object with a unit quaternion ``rotation`` and an ``origin``.

    Returns:
        RiemannianGaussian: The world-frame Gaussian.
    """
    m = g.manifold
    mean = m.act(g.mean, frame.rotation, frame.origin)
    J = m.pushforward(g.mean, frame.rotation)
    cov = regularize_post_transport(J @ g.cov @ J.T, m, policy, epsilon)
    return RiemannianGaussian(m, mean, cov)


def _precision(cov):
    return linalg.cho_solve(linalg.cho_factor(cov), np.eye(len(cov)))


def product(
    gs: Sequence[RiemannianGaussian],
    max_iter: int = defaults.PRODUCT_MAX_ITER,
    tol: float = defaults.PRODUCT_TOLERANCE,
) -> RiemannianGaussian:
    """
    Product of Gaussians on a common manifold.

    Euclidean manifolds use the precision-weighted closed form; otherwise a
    Gauss-Newton iteration runs in the tangent space at the current estimate
    with every precision transported there.

    Exceptions:
        ConvergenceError: The Gauss-Newton step did not fall below ``tol``.
    """
    gs = list(gs)
    if not gs:
        raise ManifoldArgumentError("product of an empty set of Gaussians")
    m = gs[0].manifold
    if any(g.manifold != m for g in gs):
        raise ManifoldArgumentError("all Gaussians in a product must share the manifold")
    if len(gs) == 1:
        return gs[0]

    if m.is_euclidean():
        precisions = [_precision(g.cov) for g in gs]
        total = sum(precisions)
        cov = _precision(total)
        mean = cov @ sum(P @ g.mean for P, g in zip(precisions, gs))
        return RiemannianGaussian(m, mean, symmetrize(cov))

    x = max(gs, key=lambda g: -np.linalg.slogdet(g.cov)[1]).mean
    residual = np.inf
    for _ in range(max_iter):
        total = np.zeros((m.tangent_dim, m.tangent_dim))
        rhs = np.zeros(m.tangent_dim)
        for g in gs:
            P = _precision(parallel_transport(m, g.cov, g.mean, x))
            total += P
            rhs += P @ m.log(x, g.mean)
        step = linalg.solve(total, rhs, assume_a="pos")
        residual = float(np.linalg.norm(step))
        x = m.exp(x, step)
        if residual <= tol:
            total = sum(_precision(parallel_transport(m, g.cov, g.mean, x)) for g in gs)
            return RiemannianGaussian(m, x, symmetrize(_precision(total)))
    raise ConvergenceError(
        f"Gaussian product did not converge in {max_iter} iterations (residual {residual:.3g})",
        last_iterate=x,
        residual=residual,
        iterations=max_iter,
    )


def kl_monte_carlo(
    p: RiemannianGaussian,
    q: RiemannianGaussian,
    n: int = defaults.KL_SAMPLES,
    seed: Optional[int] = 0,
    max_redraws: int = defaults.KL_MAX_REDRAWS,
) -> float:
    """
    Monte-Carlo estimate of KL(p ‖ q) from ``n`` samples of ``p``.

    Samples that fall on the cut locus of ``q``'s mean are redrawn, at most
    ``max_redraws`` times. The estimate is deterministic for a given seed.
    """
    if n < 1:
        raise ManifoldArgumentError("KL estimate needs at least one sample")
    if p.manifold != q.manifold:
        raise ManifoldArgumentError("KL divergence needs Gaussians on the same manifold")
    rng = np.random.default_rng(seed)
    m = p.manifold
    points = sample(p, n, rng)
    tangents_q, singular = m.log_many_masked(q.mean, points)
    for _ in range(max_redraws):
        if not singular.any():
            break
        redrawn = sample(p, int(singular.sum()), rng)
        points[singular] = redrawn
        tangents_q[singular], still = m.log_many_masked(q.mean, redrawn)
        singular[singular] = still
    if singular.any():
        raise SingularityError(
            f"{int(singular.sum())} samples stayed on the cut locus after {max_redraws} redraws",
            base=q.mean,
            point=points[singular][0],
            distance=np.pi,
        )
    log_p = log_pdf_many(p, points)
    log_q = np.atleast_1d(multivariate_normal.logpdf(tangents_q, cov=q.cov))
    return float(np.mean(log_p - log_q))


def kl_closed_form(p: RiemannianGaussian, q: RiemannianGaussian) -> float:
    """
    Exact KL(p ‖ q) for Gaussians on a Euclidean manifold.
    """
    if not p.manifold.is_euclidean():
        raise ManifoldArgumentError("closed-form KL is only defined on Euclidean manifolds")
    d = p.manifold.tangent_dim
    Pq = _precision(q.cov)
    diff = q.mean - p.mean
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    return float(0.5 * (np.trace(Pq @ p.cov) + diff @ Pq @ diff - d + logdet_q - logdet_p))
