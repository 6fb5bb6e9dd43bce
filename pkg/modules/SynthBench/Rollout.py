"""
Rollouts of task models on a kinematic stand-in robot, and the evaluation
runners built on them.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import param

from modules.Cascade.TaskModel import ControllerConfig, RolloutTrace, TaskModel, learn_task_model, run_sequence
from modules.Gaussian.RiemannianGaussian import RegularizationConfig
from modules.Manifold import Quaternion as quat
from modules.Segmentation.SkillSegmentation import SegmentationConfig
from modules.Selection.FrameSelection import SelectionConfig
from modules.SynthBench.Scenario import CLOSED, OPEN, ScenarioSpec, generate, goal_position, resolve, sample_frames, sample_start
from modules.TaskParameterized.Frames import FrameInstance
from utils import globals as defaults
from utils.errors import RolloutTimeoutError, TapasError

GRASP_RADIUS = 0.02
GRIPPER_CLOSED_BELOW = 0.5 * (OPEN + CLOSED)


class RolloutConfig(ControllerConfig):
    disturbance_start = param.Integer(
        default=None, bounds=(0, None), allow_None=True, doc="Step at which the end effector freezes"
    )
    disturbance_duration = param.Integer(default=90, bounds=(0, None), doc="Length of the freeze (steps)")
    tolerance = param.Number(
        default=0.02, bounds=(0, None), inclusive_bounds=(False, True), doc="Success distance to the goal (m)"
    )


class SyntheticPlant:
    """
    Kinematic end effector with a single graspable object.

    The object binds to the gripper when the gripper closes within
    ``GRASP_RADIUS`` of it and is released when the gripper opens. While
    frozen, commands are accepted but the pose does not move.
    """

    def __init__(self, start: np.ndarray, object_position, freeze_start: Optional[int] = None, freeze_duration: int = 0):
        self.pose = np.asarray(start, dtype=float).copy()
        self.gripper = float(OPEN)
        self.object_position = np.asarray(object_position, dtype=float).copy()
        self.attached = False
        self._offset = np.zeros(3)
        self._freeze = (freeze_start, freeze_duration)
        self.steps = 0
        self.frozen_steps = 0

    @property
    def frozen(self) -> bool:
        start, duration = self._freeze
        return start is not None and start <= self.steps < start + duration

    def _set_gripper(self, width: float) -> None:
        was_closed = self.gripper < GRIPPER_CLOSED_BELOW
        self.gripper = float(width)
        closed = self.gripper < GRIPPER_CLOSED_BELOW
        if closed and not was_closed and not self.attached:
            if np.linalg.norm(self.pose[:3] - self.object_position) <= GRASP_RADIUS:
                self.attached = True
                self._offset = self.object_position - self.pose[:3]
        elif not closed and self.attached:
            self.attached = False

    def _advance(self) -> None:
        if self.attached:
            self.object_position = self.pose[:3] + self._offset
        self.steps += 1

    def move_to(self, pose: np.ndarray, gripper: float) -> None:
        if self.frozen:
            self.frozen_steps += 1
        else:
            self.pose = np.concatenate([pose[:3], quat.normalize(pose[3:7])])
        self._set_gripper(gripper)
        self._advance()

    def move_by(self, translation: np.ndarray, rotation: np.ndarray, gripper: float) -> None:
        if self.frozen:
            self.frozen_steps += 1
        else:
            q = quat.normalize(quat.qmul(rotation, self.pose[3:7]))
            if np.dot(q, self.pose[3:7]) < 0:
                q = -q
            self.pose = np.concatenate([self.pose[:3] + translation, q])
        self._set_gripper(gripper)
        self._advance()


@dataclass
class RolloutOutcome:
    success: bool
    steps: int
    trace: RolloutTrace
    object_error: float = float("nan")
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "steps": self.steps,
            "object_error": self.object_error,
            "diagnostic": self.diagnostic,
            "switches": list(self.trace.switches),
        }


def rollout(
    task: TaskModel,
    frames: Dict[str, FrameInstance],
    spec: ScenarioSpec,
    config: Optional[RolloutConfig] = None,
    start: Optional[np.ndarray] = None,
    regularization: Optional[RegularizationConfig] = None,
) -> RolloutOutcome:
    """
    Run a task model once on a synthetic plant and judge the outcome.

    The episode succeeds when the sequence completes and the object ends
    within ``config.tolerance`` of the scenario goal. A budget overrun, a
    non-finite prediction or a numerical failure is a failed episode with
    the partial trace.

    Args:
        task (TaskModel): Policy to execute.
        frames (dict): Frame instances of the episode.
        spec (ScenarioSpec): Scenario giving the object and the goal.
        config (RolloutConfig, optional): Controller and disturbance options.
        start (np.ndarray, optional): Initial pose; the scenario's nominal start when omitted.

    Returns:
        RolloutOutcome: Success flag, trace and diagnostics.
    """
    spec = resolve(spec)
    config = config or RolloutConfig()
    if start is None:
        start = np.concatenate([spec.start_position, quat.normalize(spec.start_rotation)])
    plant = SyntheticPlant(
        start, frames[spec.object_frame].origin, config.disturbance_start, config.disturbance_duration
    )
    try:
        trace = run_sequence(task, frames, plant, config, regularization)
    except RolloutTimeoutError as e:
        return RolloutOutcome(False, len(e.trace), e.trace, diagnostic=str(e))
    except (TapasError, np.linalg.LinAlgError, FloatingPointError) as e:
        return RolloutOutcome(False, plant.steps, RolloutTrace(), diagnostic=f"{type(e).__name__}: {e}")
    if trace.diagnostic:
        return RolloutOutcome(False, len(trace), trace, diagnostic=trace.diagnostic)
    error = float(np.linalg.norm(plant.object_position - goal_position(spec, frames)))
    return RolloutOutcome(trace.completed and error <= config.tolerance, len(trace), trace, error)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, episode]))


def evaluate(
    task: TaskModel,
    spec: ScenarioSpec,
    n: int = 100,
    config: Optional[RolloutConfig] = None,
    seed: int = 1,
    regularization: Optional[RegularizationConfig] = None,
    keep_traces: bool = False,
) -> dict:
    """
    Success rate of a policy over ``n`` episodes with freshly sampled frames.

    Episode ``i`` draws its frames and start pose from
    ``SeedSequence([seed, i])`` so results do not depend on the order in
    which episodes run.

    Returns:
        dict: ``success_rate``, ``episodes``, mean and standard deviation of
        the successful trace lengths, per-episode outcomes and, when
        ``keep_traces`` is set, the concatenated traces as a DataFrame under
        ``"traces"``.
    """
    if n < 1:
        raise ValueError(f"evaluation needs at least one episode, got {n}")
    spec = resolve(spec)
    outcomes: List[RolloutOutcome] = []
    for i in range(n):
        rng = episode_rng(seed, i)
        frames = sample_frames(spec, rng)
        outcomes.append(rollout(task, frames, spec, config, sample_start(spec, rng), regularization))
    lengths = np.array([o.steps for o in outcomes if o.success], dtype=float)
    summary = {
        "episodes": n,
        "success_rate": float(np.mean([o.success for o in outcomes])),
        "mean_length": float(lengths.mean()) if len(lengths) else None,
        "std_length": float(lengths.std()) if len(lengths) else None,
        "outcomes": [o.to_dict() for o in outcomes],
    }
    if keep_traces:
        frames = []
        for i, o in enumerate(outcomes):
            df = o.trace.frame()
            df.insert(0, "episode", i)
            frames.append(df)
        summary["traces"] = pd.concat(frames, ignore_index=True)
    return summary


def disturbance_start(task: TaskModel, spec: ScenarioSpec) -> int:
    """The middle of the grasp skill, counted in nominal steps from the start."""
    index = min(spec.grasp_skill, len(task.skills) - 1)
    return int(sum(s.T_bar for s in task.skills[:index]) + task.skills[index].T_bar // 2)


@dataclass
class StudyRow:
    variant: str
    rate: float
    mean_length: Optional[float]
    std_length: Optional[float]
    settings: dict = field(default_factory=dict)


def _rows_frame(rows: List[StudyRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"variant": r.variant, "success_rate": r.rate, "mean_length": r.mean_length, "std_length": r.std_length, **r.settings} for r in rows]
    )


ABLATIONS = {
    "full": dict(),
    "no_segmentation": dict(segmentation=SegmentationConfig(enabled=False)),
    "no_selection": dict(selection=SelectionConfig(mode="none")),
    "global_selection": dict(selection=SelectionConfig(mode="global")),
}


def ablation(
    spec: ScenarioSpec,
    episodes: int = 200,
    seed: int = 1,
    K: int = defaults.DEFAULT_K,
    driver: str = "time",
    variants: Optional[List[str]] = None,
    config: Optional[RolloutConfig] = None,
) -> pd.DataFrame:
    """
    Success rates of the full pipeline and of its ablated variants.

    Every variant is trained on the same demonstrations and evaluated on the
    same episodes.
    """
    demos = generate(resolve(spec))
    rows = []
    for name in variants or list(ABLATIONS):
        task, _, _ = learn_task_model(demos, driver=driver, K=K, compute_boundaries=False, **ABLATIONS[name])
        summary = evaluate(task, spec, episodes, config, seed)
        rows.append(StudyRow(name, summary["success_rate"], summary["mean_length"], summary["std_length"]))
    return _rows_frame(rows)


STUDY_CONTROLLERS = [
    ("time", "factorized", "none"),
    ("time", "factorized", "threshold"),
    ("state", "naive", "none"),
    ("state", "factorized", "none"),
]


def disturbance_study(
    spec: ScenarioSpec,
    episodes: int = 100,
    seed: int = 1,
    K: int = defaults.DEFAULT_K,
    duration: int = 90,
) -> pd.DataFrame:
    """
    Success rates of time- and state-driven controllers with and without a
    mid-grasp freeze of ``duration`` steps.
    """
    demos = generate(resolve(spec))
    rows = []
    for driver, velocity, post in STUDY_CONTROLLERS:
        task, _, _ = learn_task_model(demos, driver=driver, velocity=velocity, K=K, compute_boundaries=False)
        for disturbed in (False, True):
            config = RolloutConfig(
                post_processing=post,
                disturbance_start=disturbance_start(task, resolve(spec)) if disturbed else None,
                disturbance_duration=duration,
            )
            summary = evaluate(task, spec, episodes, config, seed)
            settings = {"driver": driver, "velocity": velocity, "post_processing": post, "disturbed": disturbed}
            rows.append(StudyRow(f"{driver}/{velocity}/{post}", summary["success_rate"], summary["mean_length"], summary["std_length"], settings))
    return _rows_frame(rows)
