"""
Task-parameterized HMMs.

Demonstrations are projected into every selected frame and fitted as one
joint model. For a new episode the per-frame marginals are mapped to the
world with that episode's frames and fused by a product of Gaussians, which
gives an ordinary HMM that regression runs on.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from modules.Actions.Factorization import (
    factorize_trajectory,
    frame_dims,
    input_dims,
    model_manifold,
    naive_velocities,
)
from modules.Gaussian.RiemannianGaussian import (
    RegularizationConfig,
    RiemannianGaussian,
    product,
    transform,
)
from modules.Manifold import Quaternion as quat
from modules.Manifold.Manifold import QuaternionFactor
from modules.Mixture.HiddenMarkovModel import (
    EMConfig,
    HMMModel,
    em_fit,
    init_time_binned,
    marginalize,
)
from modules.Mixture.Regression import GmrState, gmr_step
from modules.TaskParameterized.Frames import DemonstrationSet, FrameInstance
from utils import globals as defaults
from utils.errors import DatasetSchemaError, MissingFrameError


@dataclass(frozen=True, eq=False)
class SkillModel:
    """
    A fitted task-parameterized skill.

    Attributes:
        driver (str): ``"time"`` or ``"state"``.
        selected_frames (tuple of str): Frame ids, in model order.
        model (HMMModel): Joint model over the stacked per-frame manifold.
        T_bar (int): Resampled skill length in steps.
        dt (float): Control period in seconds.
        velocity (str): ``"factorized"`` or ``"naive"`` (state driver only).
    """

    driver: str
    selected_frames: tuple
    model: HMMModel
    T_bar: int
    dt: float
    velocity: str = "factorized"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "selected_frames", tuple(self.selected_frames))

    @property
    def F(self) -> int:
        return len(self.selected_frames)

    def to_dict(self) -> dict:
        return {
            "schema": defaults.SCHEMA_SKILL,
            "name": self.name,
            "driver": self.driver,
            "velocity": self.velocity,
            "selected_frames": list(self.selected_frames),
            "T_bar": self.T_bar,
            "dt": self.dt,
            "hmm": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, values: dict, pointer: str = "") -> "SkillModel":
        if values.get("schema") != defaults.SCHEMA_SKILL:
            raise DatasetSchemaError(
                f"expected schema '{defaults.SCHEMA_SKILL}', got '{values.get('schema')}'", f"{pointer}/schema"
            )
        try:
            return cls(
                driver=values["driver"],
                selected_frames=tuple(values["selected_frames"]),
                model=HMMModel.from_dict(values["hmm"], f"{pointer}/hmm"),
                T_bar=int(values["T_bar"]),
                dt=float(values["dt"]),
                velocity=values.get("velocity", "factorized"),
                name=values.get("name", ""),
            )
        except KeyError as e:
            raise DatasetSchemaError(f"missing field {e}", pointer) from e


def _align_sequence(seq: np.ndarray, reference: Optional[np.ndarray]) -> np.ndarray:
    seq = quat.make_continuous(seq)
    if reference is not None and np.dot(seq[0], reference) < 0.0:
        seq = -seq
    return seq


def _model_velocities(demo) -> dict:
    """
    Factorized training velocities with jitter-level motion holding its
    direction. Rotation axes share one half-space and carry the sign in the
    angle.
    """
    return factorize_trajectory(
        demo.positions,
        demo.quaternions,
        defaults.MODEL_VELOCITY_EPSILON,
        defaults.MODEL_ANGULAR_EPSILON,
        signed=True,
        backfill=True,
    )


def project_demos(
    demos: DemonstrationSet,
    frames: Sequence[str],
    driver: str,
    velocity: str = "factorized",
) -> List[np.ndarray]:
    """
    Express every demonstration in each of ``frames`` and stack the result.

    Positions become ``R_fᵀ (x - b_f)`` and orientations ``q_f⁻¹ ⊗ q``.
    Orientation sequences are made continuous and put on the hemisphere of
    the first demonstration so all demos share one chart. The time column is
    ``j / (T - 1)``. The state driver adds the factorized velocities, with
    rotation angles signed about a consistent axis.

    Args:
        demos (DemonstrationSet): Segmented, resampled demonstrations.
        frames (list of str): Frame ids in model order.
        driver (str): ``"time"`` or ``"state"``.
        velocity (str): Velocity model for the state driver.

    Returns:
        list of numpy.ndarray: One (T, ambient_dim) array per demo.

    Exceptions:
        MissingFrameError: A demo lacks one of ``frames``.
    """
    frames = list(frames)
    model_manifold(len(frames), driver, velocity)
    references: Dict[str, Optional[np.ndarray]] = {f: None for f in frames}
    out = []
    for n, demo in enumerate(demos):
        T = len(demo)
        columns = []
        if driver == "time":
            columns.append((np.arange(T) / max(T - 1, 1))[:, None])
        world = naive = None
        if driver == "state":
            world = _model_velocities(demo) if velocity == "factorized" else None
            naive = naive_velocities(demo.positions, demo.quaternions) if velocity == "naive" else None
        for f in frames:
            frame = demo.frame(f, n)
            rot = _align_sequence(frame.rotation_to_local(demo.quaternions), references[f])
            if references[f] is None:
                references[f] = rot[0]
            columns += [frame.to_local(demo.positions), rot]
            if driver == "state":
                R = frame.matrix
                if velocity == "factorized":
                    columns += [world["lin_dir"] @ R, world["ang_dir"] @ R]
                else:
                    columns += [naive[0] @ R, naive[1] @ R]
        if driver == "state" and velocity == "factorized":
            columns += [world["lin_mag"][:, None], world["ang_mag"][:, None]]
        columns.append(demo.gripper[:, None])
        out.append(np.hstack(columns))
    return out


def fit(
    demos: DemonstrationSet,
    frames: Sequence[str],
    driver: str = "time",
    K: int = defaults.DEFAULT_K,
    velocity: str = "factorized",
    em_config: Optional[EMConfig] = None,
    name: str = "",
) -> SkillModel:
    """
    Fit a skill model: time-binned initialization followed by EM.
    """
    em_config = em_config or EMConfig()
    manifold = model_manifold(len(frames), driver, velocity)
    data = project_demos(demos, frames, driver, velocity)
    init = init_time_binned(manifold, data, K, epsilon=em_config.epsilon)
    model = em_fit(init, data, em_config)
    T_bar = int(round(np.mean([len(d) for d in data])))
    return SkillModel(driver, tuple(frames), model, T_bar, float(demos.dt), velocity, name)


def align_hemisphere(g: RiemannianGaussian, reference: RiemannianGaussian) -> RiemannianGaussian:
    """
    Replace quaternion means of ``g`` by their antipodes where they sit on the
    other hemisphere than ``reference``; the covariance follows the flip.
    """
    m = g.manifold
    mean = g.mean.copy()
    J = np.eye(m.tangent_dim)
    changed = False
    for factor, a, t in zip(m.factors, m.ambient_slices, m.tangent_slices):
        if isinstance(factor, QuaternionFactor) and np.dot(mean[a], reference.mean[a]) < 0.0:
            q = mean[a]
            J[t, t] = -factor.frame(-q).T @ factor.frame(q)
            mean[a] = -q
            changed = True
    if not changed:
        return g
    return RiemannianGaussian(m, mean, J @ g.cov @ J.T)


def frame_marginals(m: SkillModel) -> List[HMMModel]:
    return [marginalize(m.model, frame_dims(m.F, m.driver, f, m.velocity)) for f in range(m.F)]


def adapt(
    m: SkillModel,
    frames: Dict[str, FrameInstance],
    regularization: Optional[RegularizationConfig] = None,
) -> HMMModel:
    """
    Build the world-frame HMM of a skill for one set of frame instances.

    Each frame's marginal is transformed with that frame's instance, and the
    transformed marginals are fused component by component with a product
    of Gaussians. Priors and transitions are copied.

    Args:
        m (SkillModel): The fitted skill.
        frames (dict): Frame id to :class:`FrameInstance`; must cover
            ``m.selected_frames``.
        regularization (RegularizationConfig, optional): Post-transform
            policies; state-driven skills use ``state_policy``.

    Returns:
        HMMModel: Model over the single-frame layout of ``m``'s driver.

    Exceptions:
        MissingFrameError: A selected frame has no instance.
    """
    regularization = regularization or RegularizationConfig()
    for f in m.selected_frames:
        if f not in frames:
            raise MissingFrameError(
                f"no instance of frame '{f}' for skill '{m.name}' (available: {sorted(frames)})", frame_id=f
            )
    policy = regularization.state_policy if m.driver == "state" else regularization.policy
    marginals = frame_marginals(m)
    components = []
    for k in range(m.model.K):
        transformed = [
            transform(h.components[k], frames[f], policy, regularization.epsilon)
            for f, h in zip(m.selected_frames, marginals)
        ]
        transformed = [transformed[0]] + [align_hemisphere(g, transformed[0]) for g in transformed[1:]]
        components.append(product(transformed))
    manifold = components[0].manifold
    aligned = [components[0]] + [align_hemisphere(c, components[0]) for c in components[1:]]
    return HMMModel(manifold, m.model.priors, m.model.transitions, tuple(aligned), m.model.transition_counts)


def new_state(adapted: HMMModel, driver: str) -> GmrState:
    return GmrState(adapted, input_dims(driver))


def predict(adapted: HMMModel, state: GmrState, value) -> RiemannianGaussian:
    """
    Condition the world-frame model on the current input.

    For the time driver ``value`` is the normalized time; for the state
    driver it is the world pose (x, y, z, qw, qx, qy, qz), whose quaternion is
    moved to the hemisphere of the most probable component.
    """
    value = np.atleast_1d(np.asarray(value, dtype=float)).copy()
    if len(value) == 7:
        weights = adapted.priors if state.prior is None else state.prior
        anchor = adapted.components[int(np.argmax(weights))].mean[3:7]
        if np.dot(value[3:7], anchor) < 0.0:
            value[3:7] = -value[3:7]
    prediction, _ = gmr_step(state, value)
    return prediction


def reconstruct(adapted: HMMModel, T: int) -> np.ndarray:
    """
    Time-driven regression over ``T`` evenly spaced times in [0, 1].

    Returns:
        numpy.ndarray: (T, 8) rows of (x, y, z, qw, qx, qy, qz, gripper).
    """
    state = new_state(adapted, "time")
    return np.array([predict(adapted, state, [t]).mean for t in np.linspace(0.0, 1.0, T)])
