"""
Velocity actions: factorization into direction and magnitude, and the model manifold layouts.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from modules.Manifold import Quaternion as quat
from modules.Manifold.Manifold import (
    Circle,
    Euclid,
    ManifoldDescriptor,
    QuaternionFactor,
    Sphere2,
)
from utils import globals as defaults
from utils.errors import ManifoldArgumentError

DRIVERS = ("time", "state")
VELOCITY_MODELS = ("factorized", "naive")
UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class FactorizedVelocity:
    lin_dir: np.ndarray
    ang_dir: np.ndarray
    lin_mag: float
    ang_mag: float
    valid_lin: bool = True
    valid_ang: bool = True


def factorize(
    x_dot,
    q_t,
    q_next,
    prev_lin_dir=None,
    prev_ang_dir=None,
    lin_eps: float = defaults.VELOCITY_EPSILON,
    ang_eps: float = defaults.ANGULAR_EPSILON,
    signed: bool = False,
) -> FactorizedVelocity:
    """
    Split one step of motion into unit directions and magnitudes.

    The angular part is the relative rotation ``q_next ⊗ q_t⁻¹`` written as
    an axis and an angle in [0, π]. With ``signed`` the axis is instead kept
    in the half-space of the previous axis (world +z on the first step) and
    a flip is carried by the angle, which then lies in [-π, π]. Below the
    cutoffs the corresponding direction is held from the previous step and
    flagged invalid.

    Example:
        >>> f = factorize([0, 0, 0.02], quat.IDENTITY, quat.IDENTITY)
        >>> f.lin_dir, f.lin_mag, f.valid_ang
        (array([0., 0., 1.]), 0.02, False)
    """
    x_dot = np.asarray(x_dot, dtype=float)
    lin_mag = float(np.linalg.norm(x_dot))
    valid_lin = lin_mag >= lin_eps
    if valid_lin:
        lin_dir = x_dot / lin_mag
    else:
        lin_dir = UP.copy() if prev_lin_dir is None else np.asarray(prev_lin_dir, dtype=float)

    axis, angle = quat.to_axis_angle(quat.qmul(q_next, quat.qinv(q_t)))
    angle = float(angle)
    reference = UP if prev_ang_dir is None else np.asarray(prev_ang_dir, dtype=float)
    if signed and float(axis @ reference) < 0.0:
        axis, angle = -axis, -angle
    valid_ang = abs(angle) >= ang_eps
    if valid_ang:
        ang_dir = axis
    else:
        ang_dir = reference.copy()
    return FactorizedVelocity(lin_dir, ang_dir, lin_mag, angle, bool(valid_lin), bool(valid_ang))


def compose(f: FactorizedVelocity) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverse of :func:`factorize`: translation per step and rotation increment.

    Invalid parts produce zero translation and the identity rotation.
    """
    x_dot = f.lin_mag * np.asarray(f.lin_dir, dtype=float) if f.valid_lin else np.zeros(3)
    if f.valid_ang:
        dq = quat.from_axis_angle(f.ang_dir, f.ang_mag)
    else:
        dq = quat.IDENTITY.copy()
    return x_dot, dq


def factorize_trajectory(
    positions,
    quaternions,
    lin_eps=defaults.VELOCITY_EPSILON,
    ang_eps=defaults.ANGULAR_EPSILON,
    signed: bool = False,
    backfill: bool = False,
):
    """
    Forward-difference factorization of a whole pose trajectory.

    The last sample has no successor; it keeps the previous directions with
    zero magnitudes. ``signed`` is passed on to :func:`factorize`. With
    ``backfill`` the samples before the first valid direction take that
    direction instead of world +z.

    Returns:
        dict: ``lin_dir`` (T, 3), ``ang_dir`` (T, 3), ``lin_mag`` (T,),
        ``ang_mag`` (T,), ``valid_lin`` (T,) and ``valid_ang`` (T,).
    """
    positions = np.asarray(positions, dtype=float)
    quaternions = np.asarray(quaternions, dtype=float)
    T = len(positions)
    out = {
        "lin_dir": np.empty((T, 3)),
        "ang_dir": np.empty((T, 3)),
        "lin_mag": np.zeros(T),
        "ang_mag": np.zeros(T),
        "valid_lin": np.zeros(T, dtype=bool),
        "valid_ang": np.zeros(T, dtype=bool),
    }
    prev_lin: Optional[np.ndarray] = None
    prev_ang: Optional[np.ndarray] = None
    for t in range(T - 1):
        f = factorize(positions[t + 1] - positions[t], quaternions[t], quaternions[t + 1], prev_lin, prev_ang, lin_eps, ang_eps, signed)
        out["lin_dir"][t], out["ang_dir"][t] = f.lin_dir, f.ang_dir
        out["lin_mag"][t], out["ang_mag"][t] = f.lin_mag, f.ang_mag
        out["valid_lin"][t], out["valid_ang"][t] = f.valid_lin, f.valid_ang
        prev_lin, prev_ang = f.lin_dir, f.ang_dir
    out["lin_dir"][T - 1] = UP if prev_lin is None else prev_lin
    out["ang_dir"][T - 1] = UP if prev_ang is None else prev_ang
    if backfill:
        for key, valid in (("lin_dir", "valid_lin"), ("ang_dir", "valid_ang")):
            hits = np.flatnonzero(out[valid])
            if hits.size:
                out[key][: hits[0]] = out[key][hits[0]]
    return out


def naive_velocities(positions, quaternions) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unfactorized per-step velocities: raw translation and rotation-vector increment.
    """
    positions = np.asarray(positions, dtype=float)
    quaternions = np.asarray(quaternions, dtype=float)
    lin = np.zeros_like(positions)
    ang = np.zeros_like(positions)
    lin[:-1] = np.diff(positions, axis=0)
    ang[:-1] = quat.to_rotvec(quat.qmul(quaternions[1:], quat.qinv(quaternions[:-1])))
    return lin, ang


def _check_layout(F: int, driver: str, velocity: str):
    if F < 1:
        raise ManifoldArgumentError("a model needs at least one frame (F >= 1)")
    if driver not in DRIVERS:
        raise ManifoldArgumentError(f"unknown driver '{driver}', expected one of {DRIVERS}")
    if velocity not in VELOCITY_MODELS:
        raise ManifoldArgumentError(f"unknown velocity model '{velocity}', expected one of {VELOCITY_MODELS}")


def frame_factors(driver: str, velocity: str = "factorized") -> List:
    factors = [Euclid(label="pos", policy="full", n=3), QuaternionFactor(label="rot")]
    if driver == "state" and velocity == "factorized":
        factors += [Sphere2(label="lin_dir"), Sphere2(label="ang_dir")]
    elif driver == "state":
        factors += [Euclid(label="lin_vel", policy="rotation", n=3), Euclid(label="ang_vel", policy="rotation", n=3)]
    return factors


def model_manifold(F: int, driver: str, velocity: str = "factorized") -> ManifoldDescriptor:
    """
    Stacked manifold of a task-parameterized model with ``F`` frames.

    ``time``: ℝ_time × (ℝ³ × S³)^F × ℝ_gripper.
    ``state``: (ℝ³ × S³ × S² × S²)^F × ℝ × S¹ × ℝ_gripper, or with the naive
    velocity model (ℝ³ × S³ × ℝ³ × ℝ³)^F × ℝ_gripper.

    Example:
        >>> model_manifold(1, "state").tangent_dim
        13
    """
    _check_layout(F, driver, velocity)
    factors = []
    if driver == "time":
        factors.append(Euclid(label="time"))
    for _ in range(F):
        factors += frame_factors(driver, velocity)
    if driver == "state" and velocity == "factorized":
        factors += [Euclid(label="lin_mag"), Circle(label="ang_mag")]
    factors.append(Euclid(label="gripper"))
    return ManifoldDescriptor(tuple(factors))


def frame_dims(F: int, driver: str, f: int, velocity: str = "factorized") -> List[int]:
    """
    Factor indices of frame ``f``'s marginal: its own factors plus the global ones.
    """
    _check_layout(F, driver, velocity)
    per_frame = len(frame_factors(driver, velocity))
    offset = 1 if driver == "time" else 0
    own = list(range(offset + f * per_frame, offset + (f + 1) * per_frame))
    tail = list(range(offset + F * per_frame, len(model_manifold(F, driver, velocity))))
    return ([0] if driver == "time" else []) + own + tail


def input_dims(driver: str, velocity: str = "factorized") -> List[int]:
    """Factors a single-frame (world) model is conditioned on."""
    return [0] if driver == "time" else [0, 1]
