"""
Riemannian manifold kernel.

Points are flat numpy arrays of ambient coordinates, tangents are flat arrays
of minimal coordinates expressed in the orthonormal frame attached to their
base point. The frame at a base point is the frame at the manifold origin,
parallel transported along the geodesic from the origin.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from modules.Manifold import Quaternion as quat
from utils.errors import ManifoldArgumentError, SingularityError

# Geodesic distance to the antipode below which inputs are rejected.
CUT_LOCUS_TOLERANCE = 1e-7
UNIT_TOLERANCE = 1e-9
# 1 + <e, x> below which S² points count as antipodal to the origin for the frame action.
ANTIPODE_MARGIN = 1e-4
POLICIES = ("full", "rotation", "identity")


def wrap_angle(angle):
    """
    Wrap angle(s) to the half-open interval (-π, π].
    """
    return -(np.mod(-np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi)


@dataclass(frozen=True)
class Factor:
    """
    One primitive manifold factor.

    ``label`` names the quantity the factor models (``"pos"``, ``"rot"``,
    ``"time"`` ...) and ``policy`` declares how a task frame acts on it:
    ``"full"`` (rotation and translation), ``"rotation"`` or ``"identity"``.
    """

    label: str = ""
    policy: str = "identity"

    kind = "factor"
    ambient_dim = 0
    tangent_dim = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ManifoldArgumentError(f"unknown transform policy '{self.policy}'")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, "policy": self.policy}

    def origin(self) -> np.ndarray:
        raise NotImplementedError

    def validate(self, x) -> None:
        raise NotImplementedError

    def log_masked(self, base, points) -> Tuple[np.ndarray, np.ndarray]:
        """Batched log map; returns the tangents and a mask of cut-locus rows."""
        raise NotImplementedError

    def exp(self, base, tangents) -> np.ndarray:
        raise NotImplementedError

    def transport_matrix(self, source, target) -> np.ndarray:
        return np.eye(self.tangent_dim)

    def distance(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def extrinsic_mean(self, points, weights) -> np.ndarray:
        """Weighted mean of the ambient coordinates, mapped back onto the factor."""
        return weights @ np.atleast_2d(points)

    def act(self, points, rotation, translation) -> np.ndarray:
        return points

    def pushforward(self, point, rotation) -> np.ndarray:
        """Tangent-coordinate matrix of the frame action from ``point`` to its image."""
        return np.eye(self.tangent_dim)

    def log(self, base, points) -> np.ndarray:
        tangents, singular = self.log_masked(base, points)
        if np.any(singular):
            row = int(np.flatnonzero(singular)[0])
            raise SingularityError(
                f"{self.kind} factor '{self.label}': point {np.asarray(points)[row]} is on the cut locus "
                f"of base {np.asarray(base)} (antipodal within {CUT_LOCUS_TOLERANCE:g} rad)",
                base=np.asarray(base),
                point=np.asarray(points)[row],
                distance=np.pi,
            )
        return tangents


@dataclass(frozen=True)
class Euclid(Factor):
    n: int = 1

    kind = "euclid"

    @property
    def ambient_dim(self):
        return self.n

    @property
    def tangent_dim(self):
        return self.n

    def __post_init__(self):
        super().__post_init__()
        if self.n < 1:
            raise ManifoldArgumentError("Euclid factor needs n >= 1")
        if self.policy != "identity" and self.n != 3:
            raise ManifoldArgumentError(
                f"only 3-dimensional Euclidean factors can be rotated (label '{self.label}', n={self.n})"
            )

    def to_dict(self) -> dict:
        return dict(super().to_dict(), n=self.n)

    def origin(self):
        return np.zeros(self.n)

    def validate(self, x):
        if not np.all(np.isfinite(x)):
            raise ManifoldArgumentError(f"Euclidean factor '{self.label}' has non-finite coordinates")

    def log_masked(self, base, points):
        points = np.atleast_2d(points)
        return points - base, np.zeros(len(points), dtype=bool)

    def exp(self, base, tangents):
        return np.atleast_2d(tangents) + base

    def distance(self, a, b):
        return np.linalg.norm(np.atleast_2d(a) - np.atleast_2d(b), axis=-1)

    def act(self, points, rotation, translation):
        if self.policy == "identity":
            return points
        rotated = np.atleast_2d(points) @ quat.to_matrix(rotation).T
        if self.policy == "full" and translation is not None:
            rotated = rotated + np.asarray(translation, dtype=float)
        return rotated

    def pushforward(self, point, rotation):
        if self.policy == "identity":
            return np.eye(self.n)
        return quat.to_matrix(rotation)


@dataclass(frozen=True)
class Circle(Factor):
    """S¹ stored as an angle in (-π, π]."""

    kind = "circle"
    ambient_dim = 1
    tangent_dim = 1

    def origin(self):
        return np.zeros(1)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > np.pi + 1e-12):
            raise ManifoldArgumentError(f"circle factor '{self.label}' expects an angle in (-π, π], got {x}")

    def log_masked(self, base, points):
        points = np.atleast_2d(points)
        return wrap_angle(points - base), np.zeros(len(points), dtype=bool)

    def exp(self, base, tangents):
        return wrap_angle(np.atleast_2d(tangents) + base)

    def distance(self, a, b):
        return np.abs(wrap_angle(np.atleast_2d(a) - np.atleast_2d(b)))[..., 0]

    def extrinsic_mean(self, points, weights):
        angles = np.atleast_2d(points)[:, 0]
        return np.array([np.arctan2(weights @ np.sin(angles), weights @ np.cos(angles))])


@dataclass(frozen=True)
class Sphere(Factor):
    """
    Unit sphere Sⁿ ⊂ ℝⁿ⁺¹ with frames transported from the origin.
    """

    kind = "sphere"

    def _origin_frame(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def tangent_dim(self):
        return self.ambient_dim - 1

    def validate(self, x):
        norm = np.linalg.norm(x)
        if not np.isfinite(norm) or abs(norm - 1.0) > UNIT_TOLERANCE:
            raise ManifoldArgumentError(
                f"{self.kind} factor '{self.label}' expects a unit vector, got norm {norm:.12g}"
            )

    def frame(self, x) -> np.ndarray:
        """
        Orthonormal tangent frame at ``x`` as an (ambient × tangent) matrix.

        Within 1e-6 of the origin's antipode the frame falls back to the origin
        frame turned by π about its first axis.
        """
        x = np.asarray(x, dtype=float)
        e = self.origin()
        E = self._origin_frame()
        c = 1.0 + float(e @ x)
        if c > 1e-6:
            F = E - np.outer(e + x, x @ E) / c
        else:
            F = E.copy()
            F[:, -1] = -F[:, -1]
        F = F - np.outer(x, x @ F)
        Q, R = np.linalg.qr(F)
        return Q * np.sign(np.diag(R))

    def log_masked(self, base, points):
        base = np.asarray(base, dtype=float)
        points = np.atleast_2d(points)
        d = points @ base
        v = points - d[:, None] * base
        nv = np.linalg.norm(v, axis=1)
        # arctan2(|v|, d) is arccos(d) without its loss of precision near ±1
        theta = np.arctan2(nv, d)
        singular = (np.pi - theta) < CUT_LOCUS_TOLERANCE
        scale = np.where(nv > 1e-300, theta / np.where(nv > 1e-300, nv, 1.0), 1.0)
        u = v * scale[:, None]
        return u @ self.frame(base), singular

    def exp(self, base, tangents):
        base = np.asarray(base, dtype=float)
        u = np.atleast_2d(tangents) @ self.frame(base).T
        theta = np.linalg.norm(u, axis=1)
        sinc = np.where(theta > 1e-12, np.sin(theta) / np.where(theta > 1e-12, theta, 1.0), 1.0)
        x = np.cos(theta)[:, None] * base + sinc[:, None] * u
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    def distance(self, a, b):
        chord = np.linalg.norm(np.atleast_2d(a) - np.atleast_2d(b), axis=-1)
        return 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))

    def extrinsic_mean(self, points, weights):
        points = np.atleast_2d(points)
        m = weights @ points
        norm = np.linalg.norm(m)
        # points spread evenly around the sphere have no extrinsic mean
        if norm < 1e-6:
            return points[int(np.argmax(weights))].copy()
        return m / norm

    def transport_matrix(self, source, target):
        source = np.asarray(source, dtype=float)
        target = np.asarray(target, dtype=float)
        if np.array_equal(source, target):
            return np.eye(self.tangent_dim)
        c = 1.0 + float(source @ target)
        if self.distance(source, target)[0] > np.pi - CUT_LOCUS_TOLERANCE:
            raise SingularityError(
                f"cannot transport between antipodal points on {self.kind} factor '{self.label}'",
                base=source,
                point=target,
                distance=np.pi,
            )
        P = np.eye(self.ambient_dim) - np.outer(source + target, target) / c
        return self.frame(target).T @ P @ self.frame(source)

    def _ambient_action(self, rotation) -> np.ndarray:
        raise NotImplementedError

    def act(self, points, rotation, translation):
        if self.policy == "identity":
            return points
        moved = np.atleast_2d(points) @ self._ambient_action(rotation).T
        return moved / np.linalg.norm(moved, axis=1, keepdims=True)

    def pushforward(self, point, rotation):
        if self.policy == "identity":
            return np.eye(self.tangent_dim)
        L = self._ambient_action(rotation)
        point = np.asarray(point, dtype=float)
        image = L @ point
        image = image / np.linalg.norm(image)
        return self.frame(image).T @ L @ self.frame(point)


@dataclass(frozen=True)
class Sphere2(Sphere):
    """Directions in ℝ³; origin e = (0, 0, 1)."""

    kind = "sphere2"
    ambient_dim = 3
    policy: str = "rotation"

    def origin(self):
        return np.array([0.0, 0.0, 1.0])

    def _origin_frame(self):
        return np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

    def _ambient_action(self, rotation):
        # q [0, p] q⁻¹ is the rotation matrix of q applied to p
        return quat.to_matrix(rotation)

    def pushforward(self, point, rotation):
        """
        The rotation applied at the origin, carried to the surrogate base
        ``q e q⁻¹`` and parallel transported from there to the image.

        Near the antipode of the origin, where the transport to the origin
        degenerates, the differential is read off the frames directly.
        """
        if self.policy == "identity":
            return np.eye(self.tangent_dim)
        point = np.asarray(point, dtype=float)
        e = self.origin()
        if 1.0 + float(e @ point) < ANTIPODE_MARGIN:
            return super().pushforward(point, rotation)
        L = self._ambient_action(rotation)
        base = surrogate_base_s2(rotation)
        image = L @ point
        image = image / np.linalg.norm(image)
        at_origin = self.frame(base).T @ L @ self._origin_frame()
        return self.transport_matrix(base, image) @ at_origin @ self.transport_matrix(point, e)


@dataclass(frozen=True)
class QuaternionFactor(Sphere):
    """Unit quaternions (w, x, y, z); origin is the identity rotation."""

    kind = "quaternion"
    ambient_dim = 4
    policy: str = "rotation"

    def origin(self):
        return quat.IDENTITY.copy()

    def _origin_frame(self):
        return np.vstack([np.zeros(3), np.eye(3)])

    def _ambient_action(self, rotation):
        return quat.left_matrix(rotation)


FACTOR_KINDS = {
    "euclid": Euclid,
    "circle": Circle,
    "sphere2": Sphere2,
    "quaternion": QuaternionFactor,
}


def factor_from_dict(values: dict) -> Factor:
    values = dict(values)
    kind = values.pop("kind")
    if kind not in FACTOR_KINDS:
        raise ManifoldArgumentError(f"unknown manifold factor kind '{kind}'")
    return FACTOR_KINDS[kind](**values)


@dataclass(frozen=True)
class ManifoldDescriptor:
    """
    Ordered product of primitive factors.

    Example:
        >>> pose = ManifoldDescriptor((Euclid(label="pos", policy="full", n=3), QuaternionFactor(label="rot")))
        >>> pose.ambient_dim, pose.tangent_dim
        (7, 6)
    """

    factors: Tuple[Factor, ...]
    ambient_slices: Tuple[slice, ...] = field(init=False, repr=False, compare=False)
    tangent_slices: Tuple[slice, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ManifoldArgumentError("a manifold needs at least one factor")
        object.__setattr__(self, "factors", factors)
        a_slices, t_slices = [], []
        a0 = t0 = 0
        for f in factors:
            a_slices.append(slice(a0, a0 + f.ambient_dim))
            t_slices.append(slice(t0, t0 + f.tangent_dim))
            a0 += f.ambient_dim
            t0 += f.tangent_dim
        object.__setattr__(self, "ambient_slices", tuple(a_slices))
        object.__setattr__(self, "tangent_slices", tuple(t_slices))

    @property
    def ambient_dim(self) -> int:
        return sum(f.ambient_dim for f in self.factors)

    @property
    def tangent_dim(self) -> int:
        return sum(f.tangent_dim for f in self.factors)

    def __len__(self):
        return len(self.factors)

    def to_dict(self) -> dict:
        return {"factors": [f.to_dict() for f in self.factors]}

    @classmethod
    def from_dict(cls, values: dict) -> "ManifoldDescriptor":
        return cls(tuple(factor_from_dict(f) for f in values["factors"]))

    def labels(self) -> List[str]:
        return [f.label for f in self.factors]

    def find(self, label: str) -> List[int]:
        return [i for i, f in enumerate(self.factors) if f.label == label]

    def origin(self) -> np.ndarray:
        return np.concatenate([f.origin() for f in self.factors])

    def ambient_index(self, dims: Sequence[int]) -> np.ndarray:
        return np.concatenate([np.arange(self.ambient_slices[d].start, self.ambient_slices[d].stop) for d in dims])

    def tangent_index(self, dims: Sequence[int]) -> np.ndarray:
        return np.concatenate([np.arange(self.tangent_slices[d].start, self.tangent_slices[d].stop) for d in dims])

    def euclidean_tangent_mask(self) -> np.ndarray:
        mask = np.zeros(self.tangent_dim, dtype=bool)
        for f, s in zip(self.factors, self.tangent_slices):
            mask[s] = isinstance(f, Euclid)
        return mask

    def is_euclidean(self) -> bool:
        return all(isinstance(f, Euclid) for f in self.factors)

    def sub(self, dims: Sequence[int]) -> "ManifoldDescriptor":
        dims = list(dims)
        if not dims:
            raise ManifoldArgumentError("cannot build a sub-manifold from an empty factor set")
        if len(set(dims)) != len(dims) or min(dims) < 0 or max(dims) >= len(self.factors):
            raise ManifoldArgumentError(f"invalid factor subset {dims} for a {len(self.factors)}-factor manifold")
        return ManifoldDescriptor(tuple(self.factors[d] for d in dims))

    def validate(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.ambient_dim,):
            raise ManifoldArgumentError(
                f"point has shape {point.shape}, manifold expects ({self.ambient_dim},)"
            )
        for f, s in zip(self.factors, self.ambient_slices):
            f.validate(point[s])
        return point

    def _check_tangents(self, tangents) -> np.ndarray:
        tangents = np.asarray(tangents, dtype=float)
        if tangents.shape[-1] != self.tangent_dim:
            raise ManifoldArgumentError(
                f"tangent has {tangents.shape[-1]} coordinates, manifold expects {self.tangent_dim}"
            )
        return tangents

    def _check_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.ambient_dim:
            raise ManifoldArgumentError(
                f"point has {points.shape[-1]} coordinates, manifold expects {self.ambient_dim}"
            )
        return points

    def log_many_masked(self, base, points) -> Tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(self._check_points(points))
        base = self._check_points(base)
        out = np.empty((len(points), self.tangent_dim))
        singular = np.zeros(len(points), dtype=bool)
        for f, a, t in zip(self.factors, self.ambient_slices, self.tangent_slices):
            out[:, t], mask = f.log_masked(base[a], points[:, a])
            singular |= mask
        return out, singular

    def log_many(self, base, points) -> np.ndarray:
        points = np.atleast_2d(self._check_points(points))
        base = self._check_points(base)
        out = np.empty((len(points), self.tangent_dim))
        for f, a, t in zip(self.factors, self.ambient_slices, self.tangent_slices):
            out[:, t] = f.log(base[a], points[:, a])
        return out

    def exp_many(self, base, tangents) -> np.ndarray:
        tangents = np.atleast_2d(self._check_tangents(tangents))
        base = self._check_points(base)
        out = np.empty((len(tangents), self.ambient_dim))
        for f, a, t in zip(self.factors, self.ambient_slices, self.tangent_slices):
            out[:, a] = f.exp(base[a], tangents[:, t])
        return out

    def log(self, base, point) -> np.ndarray:
        return self.log_many(base, point)[0]

    def exp(self, base, tangent) -> np.ndarray:
        return self.exp_many(base, tangent)[0]

    def transport_matrix(self, source, target) -> np.ndarray:
        source = self._check_points(source)
        target = self._check_points(target)
        M = np.zeros((self.tangent_dim, self.tangent_dim))
        for f, a, t in zip(self.factors, self.ambient_slices, self.tangent_slices):
            M[t, t] = f.transport_matrix(source[a], target[a])
        return M

    def extrinsic_mean(self, points, weights) -> np.ndarray:
        """
        Factor-wise weighted mean in ambient coordinates, projected back onto
        each factor: normalized for spheres, the circular mean for angles.
        """
        points = np.atleast_2d(self._check_points(points))
        weights = np.asarray(weights, dtype=float)
        out = np.empty(self.ambient_dim)
        for f, a in zip(self.factors, self.ambient_slices):
            out[a] = f.extrinsic_mean(points[:, a], weights)
        return out

    def distance_many(self, a, b) -> np.ndarray:
        a = np.atleast_2d(self._check_points(a))
        b = np.atleast_2d(self._check_points(b))
        total = np.zeros(max(len(a), len(b)))
        for f, s in zip(self.factors, self.ambient_slices):
            total = total + f.distance(a[:, s], b[:, s]) ** 2
        return np.sqrt(total)

    def act(self, point, rotation, translation=None) -> np.ndarray:
        point = self._check_points(point)
        out = np.empty_like(point)
        for f, a in zip(self.factors, self.ambient_slices):
            out[a] = np.reshape(f.act(point[a], rotation, translation), -1)
        return out

    def pushforward(self, point, rotation) -> np.ndarray:
        point = self._check_points(point)
        M = np.zeros((self.tangent_dim, self.tangent_dim))
        for f, a, t in zip(self.factors, self.ambient_slices, self.tangent_slices):
            M[t, t] = f.pushforward(point[a], rotation)
        return M


def exp_map(manifold: ManifoldDescriptor, base, tangent) -> np.ndarray:
    """
    Exponential map ``Exp_base(tangent)``.

    Args:
        manifold (ManifoldDescriptor): The manifold both arguments live on.
        base (array-like): Base point (ambient coordinates).
        tangent (array-like): Tangent coordinates in the frame at ``base``.

    Returns:
        numpy.ndarray: The point reached along the geodesic.

    Example:
        >>> s3 = ManifoldDescriptor((QuaternionFactor(),))
        >>> exp_map(s3, [1, 0, 0, 0], [0, 0, np.pi / 4]).round(6)
        array([0.707107, 0.      , 0.      , 0.707107])
    """
    return manifold.exp(base, tangent)


def log_map(manifold: ManifoldDescriptor, base, point) -> np.ndarray:
    """
    Logarithmic map ``Log_base(point)``; inverse of :func:`exp_map`.

    Raises:
        SingularityError: ``point`` is antipodal to ``base`` on a spherical factor.
    """
    return manifold.log(base, point)


def parallel_transport(manifold: ManifoldDescriptor, cov, source, target) -> np.ndarray:
    """
    Parallel transport a tangent-space covariance from ``source`` to ``target``.

    The transport is an isometry, so the eigenvalues of ``cov`` are preserved.
    """
    cov = np.asarray(cov, dtype=float)
    if np.array_equal(np.asarray(source, dtype=float), np.asarray(target, dtype=float)):
        return cov.copy()
    M = manifold.transport_matrix(source, target)
    out = M @ cov @ M.T
    return 0.5 * (out + out.T)


def act(manifold: ManifoldDescriptor, point, rotation, translation=None) -> np.ndarray:
    """
    Apply a rigid frame (rotation quaternion, optional translation) to a point.

    Each factor follows its declared policy: Euclidean ``full`` factors are
    rotated then translated, S² factors are rotated by ``q [0, p] q⁻¹``, S³
    factors are left multiplied by ``q`` and ``identity`` factors are
    unchanged.

    Raises:
        ManifoldArgumentError: ``rotation`` is not unit within 1e-6.
    """
    quat.check_unit(rotation, tol=1e-6)
    return manifold.act(point, rotation, translation)


def surrogate_base_s2(rotation) -> np.ndarray:
    """
    S² element standing in for a quaternion base: ``(q [0, e] q⁻¹)[1:4]``.
    """
    quat.check_unit(rotation, tol=1e-6)
    b = quat.rotate(rotation, Sphere2().origin())
    return b / np.linalg.norm(b)


def geodesic_distance(manifold: ManifoldDescriptor, a, b) -> float:
    return float(manifold.distance_many(a, b)[0])


make_continuous = quat.make_continuous
