"""
Quaternion algebra in scalar-first (w, x, y, z) convention.

All functions accept a single quaternion of shape (4,) or a stack of shape
(N, 4) and broadcast like numpy.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from utils.errors import ManifoldArgumentError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def qmul(a, b):
    """
    Hamilton product ``a ⊗ b``.

    Example:
        >>> qmul(IDENTITY, np.array([0.0, 1.0, 0.0, 0.0]))
        array([0., 1., 0., 0.])
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def qconj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qinv(q):
    q = np.asarray(q, dtype=float)
    return qconj(q) / np.sum(q * q, axis=-1, keepdims=True)


def left_matrix(q):
    """
    4x4 matrix ``L`` with ``L @ p == qmul(q, p)``.
    """
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )


def check_unit(q, tol=1e-6, what="rotation"):
    """
    Raise ``ManifoldArgumentError`` when ``q`` is not a unit quaternion within ``tol``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ManifoldArgumentError(f"{what} must have 4 components, got shape {q.shape}")
    norms = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ManifoldArgumentError(
            f"{what} is not a unit quaternion (norm deviation {np.max(np.abs(norms - 1.0)):.3g} > {tol:g})"
        )
    return q


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def to_matrix(q):
    """
    Rotation matrix (or stack of matrices) of unit quaternion(s) ``q``.
    """
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(np.roll(q, -1, axis=-1)).as_matrix()


def from_matrix(matrix):
    """
    Unit quaternion(s) with non-negative real part for rotation matrix(es).
    """
    q = np.roll(Rotation.from_matrix(matrix).as_quat(), 1, axis=-1)
    return np.where(q[..., :1] < 0.0, -q, q)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def from_rotvec(rotvec):
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)
    half = 0.5 * angle
    # sin(h)/angle -> 1/2 as angle -> 0
    scale = np.where(angle > 1e-12, np.sin(half) / np.where(angle > 1e-12, angle, 1.0), 0.5)
    return np.concatenate([np.cos(half)[..., None], scale[..., None] * rotvec], axis=-1)


def to_axis_angle(q):
    """
    Axis and angle of unit quaternion(s), with the sign chosen so the angle lies in [0, π].

    Returns:
        tuple: ``(axis, angle)``; the axis is undefined (zeros) for the identity.
    """
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    vec = q[..., 1:]
    sin_half = np.linalg.norm(vec, axis=-1)
    angle = 2.0 * np.arctan2(sin_half, q[..., 0])
    safe = np.where(sin_half > 0.0, sin_half, 1.0)
    axis = np.where((sin_half > 0.0)[..., None], vec / safe[..., None], 0.0)
    return axis, angle


def to_rotvec(q):
    axis, angle = to_axis_angle(q)
    return axis * np.asarray(angle)[..., None]


def rotate(q, v):
    """
    Rotate vector(s) ``v`` by unit quaternion ``q`` via ``q [0, v] q⁻¹``.
    """
    v = np.asarray(v, dtype=float)
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return qmul(qmul(q, pure), qconj(q))[..., 1:]


def random(rng, n=None):
    """
    Uniformly distributed unit quaternion(s) drawn from ``rng``.
    """
    shape = (4,) if n is None else (n, 4)
    q = rng.normal(size=shape)
    return normalize(q)


def slerp(q0, q1, s):
    """
    Spherical linear interpolation from ``q0`` (s=0) to ``q1`` (s=1).

    The path is taken on the hemisphere of ``q0``: ``q1`` is sign flipped when
    the two are more than 90° apart in S³. ``s`` may be an array, in which case
    a stack of quaternions is returned. Endpoints are reproduced exactly.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    s = np.asarray(s, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    theta = np.arctan2(np.linalg.norm(q1 - dot * q0), dot)
    if theta < 1e-9:
        out = (1.0 - s)[..., None] * q0 + s[..., None] * q1
    else:
        sin_theta = np.sin(theta)
        w0 = np.sin((1.0 - s) * theta) / sin_theta
        w1 = np.sin(s * theta) / sin_theta
        out = w0[..., None] * q0 + w1[..., None] * q1
    out = normalize(out)
    out = np.where((s == 0.0)[..., None], q0, out)
    return np.where((s == 1.0)[..., None], q1, out)


def make_continuous(qs):
    """
    Flip quaternion signs so that consecutive quaternions have a non-negative dot product.

    The represented rotations are unchanged; every output equals ± the input.

    Args:
        qs (array-like): Sequence of unit quaternions, shape (T, 4).

    Returns:
        numpy.ndarray: The sign-corrected sequence.

    Example:
        >>> q = np.array([0.6, 0.8, 0.0, 0.0])
        >>> make_continuous([q, -q])
        array([[0.6, 0.8, 0. , 0. ],
               [0.6, 0.8, 0. , 0. ]])
    """
    qs = np.array(qs, dtype=float, copy=True)
    if qs.ndim != 2 or qs.shape[1] != 4 or len(qs) == 0:
        raise ManifoldArgumentError(f"expected a non-empty (T, 4) quaternion sequence, got shape {qs.shape}")
    for t in range(1, len(qs)):
        if np.dot(qs[t - 1], qs[t]) < 0.0:
            qs[t] = -qs[t]
    return qs
