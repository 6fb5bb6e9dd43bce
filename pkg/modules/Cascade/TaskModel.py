"""
Multi-skill task models: learning, resequencing and execution.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
import param

from modules.Actions.Factorization import FactorizedVelocity, compose
from modules.Cascade.Cascade import (
    CascadeBoundary,
    CascadeConfig,
    cascade_skills,
    reverse_skill,
    terminal_component,
)
from modules.Gaussian.RiemannianGaussian import RegularizationConfig, RiemannianGaussian
from modules.Manifold import Quaternion as quat
from modules.Mixture.HiddenMarkovModel import EMConfig
from modules.Segmentation.SkillSegmentation import (
    SegmentationConfig,
    SegmentationResult,
    segment_and_align,
)
from modules.Selection.FrameSelection import (
    RelevanceReport,
    SelectionConfig,
    score_candidates,
    select,
)
from modules.TaskParameterized.Frames import DemonstrationSet, FrameInstance
from modules.TaskParameterized.TaskParameterizedHMM import SkillModel, adapt, fit, new_state, predict
from utils import globals as defaults
from utils.PipelineClasses import ConfigBase
from utils.errors import DatasetSchemaError, RolloutTimeoutError

TRACE_COLUMNS = ["step", "skill", "x", "y", "z", "qw", "qx", "qy", "qz", "gripper", "top_component", "top_weight"]


class ControllerConfig(ConfigBase):
    post_processing = param.Selector(
        default="none", objects=["none", "threshold", "clamp"], doc="Post-processing of the policy output"
    )
    delta = param.Number(
        default=0.01, bounds=(0, None), inclusive_bounds=(False, True),
        doc="Thresholding distance (m): time only advances within it",
    )
    v_max = param.Number(
        default=0.02, bounds=(0, None), inclusive_bounds=(False, True), doc="Clamp on the translation per step (m)"
    )
    switch_mass = param.Number(
        default=0.9, bounds=(0, 1), doc="State mass on the terminal component that completes a skill"
    )
    budget_factor = param.Number(
        default=5.0, bounds=(0, None), inclusive_bounds=(False, True), doc="Step budget as a multiple of the skill lengths"
    )
    max_steps = param.Integer(default=None, bounds=(1, None), allow_None=True, doc="Explicit step budget")
    settle_speed = param.Number(
        default=defaults.SETTLE_SPEED, bounds=(0, None), doc="Translation per step (m) below which a state-driven skill is at rest"
    )
    settle_angle = param.Number(
        default=defaults.SETTLE_ANGLE, bounds=(0, None), doc="Rotation per step (rad) below which a state-driven skill is at rest"
    )
    settle_steps = param.Integer(
        default=defaults.SETTLE_STEPS, bounds=(1, None),
        doc="Consecutive steps at rest after which the state moves to the next components",
    )
    kl_samples = param.Integer(
        default=defaults.ROLLOUT_KL_SAMPLES, bounds=(1, None),
        doc="Monte-Carlo samples per KL for the cascade boundaries of an episode",
    )


class Plant(Protocol):
    """What :func:`run_sequence` needs from the controlled system."""

    pose: np.ndarray
    gripper: float

    def move_to(self, pose: np.ndarray, gripper: float) -> None: ...

    def move_by(self, translation: np.ndarray, rotation: np.ndarray, gripper: float) -> None: ...


@dataclass
class RolloutTrace:
    rows: List[dict] = field(default_factory=list)
    switches: List[int] = field(default_factory=list)
    completed: bool = False
    diagnostic: str = ""

    def __len__(self):
        return len(self.rows)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRACE_COLUMNS)

    def skills(self) -> np.ndarray:
        return np.array([r["skill"] for r in self.rows], dtype=int)


@dataclass(eq=False)
class TaskModel:
    """
    Ordered skills with the cascade boundaries between neighbours.

    ``boundaries`` are computed for one frame configuration (the first
    demonstration's when learned) and are recomputed per episode by
    :func:`run_sequence`.
    """

    skills: Tuple[SkillModel, ...]
    boundaries: List[CascadeBoundary] = field(default_factory=list)
    reports: List[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.skills = tuple(self.skills)

    @property
    def frame_ids(self) -> List[str]:
        return sorted({f for s in self.skills for f in s.selected_frames})

    @property
    def driver(self) -> str:
        return self.skills[0].driver

    def reorder(self, order: Sequence[int]) -> "TaskModel":
        return TaskModel(tuple(self.skills[i] for i in order), [], list(self.reports), dict(self.config))

    def reversed(self, indices: Optional[Sequence[int]] = None) -> "TaskModel":
        """Reverse the listed skills (all when omitted) and play them in reverse order."""
        indices = range(len(self.skills)) if indices is None else indices
        skills = [reverse_skill(s) if i in indices else s for i, s in enumerate(self.skills)]
        return TaskModel(tuple(skills[::-1]), [], list(self.reports), dict(self.config))

    def to_dict(self) -> dict:
        return {
            "schema": defaults.SCHEMA_TASK,
            "skills": [s.to_dict() for s in self.skills],
            "boundaries": [b.to_dict() for b in self.boundaries],
            "reports": self.reports,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "TaskModel":
        if values.get("schema") != defaults.SCHEMA_TASK:
            raise DatasetSchemaError(f"expected schema '{defaults.SCHEMA_TASK}', got '{values.get('schema')}'", "/schema")
        if "skills" not in values or not values["skills"]:
            raise DatasetSchemaError("a task model needs at least one skill", "/skills")
        skills = tuple(SkillModel.from_dict(s, f"/skills/{i}") for i, s in enumerate(values["skills"]))
        boundaries = [CascadeBoundary.from_dict(b) for b in values.get("boundaries", [])]
        return cls(skills, boundaries, list(values.get("reports", [])), dict(values.get("config", {})))


def select_task_frames(
    demos: DemonstrationSet,
    skill_sets: Sequence[DemonstrationSet],
    candidates: Sequence[str],
    selection: Optional[SelectionConfig] = None,
) -> Tuple[List[RelevanceReport], List[List[str]]]:
    """
    Frames of every skill according to the selection mode.

    ``per_skill`` scores each skill's aligned demonstrations, ``global``
    scores the unsegmented demonstrations once and applies the result to
    every skill, ``none`` keeps every candidate.

    Returns:
        tuple: The relevance reports and the selected frame ids per skill.
    """
    selection = selection or SelectionConfig()
    candidates = sorted(candidates)
    reports: List[RelevanceReport] = []
    if selection.mode == "per_skill":
        for s, skill_demos in enumerate(skill_sets):
            report = score_candidates(skill_demos, candidates, selection.K, selection.epsilon, skill=s)
            select(report, selection.tau)
            reports.append(report)
        return reports, [r.selected for r in reports]
    if selection.mode == "global":
        _, whole = segment_and_align(demos, SegmentationConfig(enabled=False))
        report = score_candidates(whole[0], candidates, selection.K, selection.epsilon, skill=-1)
        reports.append(report)
        return reports, [select(report, selection.tau)] * len(skill_sets)
    return reports, [list(candidates)] * len(skill_sets)


def learn_task_model(
    demos: DemonstrationSet,
    driver: str = "time",
    velocity: str = "factorized",
    K: int = defaults.DEFAULT_K,
    segmentation: Optional[SegmentationConfig] = None,
    selection: Optional[SelectionConfig] = None,
    em: Optional[EMConfig] = None,
    cascade: Optional[CascadeConfig] = None,
    candidates: Optional[Sequence[str]] = None,
    compute_boundaries: bool = True,
) -> Tuple[TaskModel, SegmentationResult, List[RelevanceReport]]:
    """
    Learn a task model from raw demonstrations.

    The demonstrations are segmented into skills, frames are selected for
    every skill and one task-parameterized HMM is fitted per skill.

    Args:
        demos (DemonstrationSet): Unsegmented demonstrations.
        driver (str): ``"time"`` or ``"state"``.
        velocity (str): ``"factorized"`` or ``"naive"``.
        K (int): Components per skill.
        segmentation, selection, em, cascade: Stage configurations.
        candidates (list of str, optional): Candidate frames; every frame
            common to all demos when omitted.
        compute_boundaries (bool): Cascade the skills on the first demo's frames.

    Returns:
        tuple: The :class:`TaskModel`, the segmentation result and the
        relevance reports (empty when selection is off).
    """
    segmentation = segmentation or SegmentationConfig()
    selection = selection or SelectionConfig()
    candidates = sorted(candidates or demos.frame_ids())
    result, skill_sets = segment_and_align(demos, segmentation)

    reports, chosen = select_task_frames(demos, skill_sets, candidates, selection)

    skills = tuple(
        fit(skill_demos, frames, driver, K, velocity, em, name=f"skill_{s}")
        for s, (skill_demos, frames) in enumerate(zip(skill_sets, chosen))
    )
    config = {
        "driver": driver,
        "velocity": velocity,
        "K": K,
        "segmentation": segmentation.to_dict(),
        "selection": selection.to_dict(),
        "em": (em or EMConfig()).to_dict(),
    }
    task = TaskModel(skills, [], [r.to_dict() for r in reports], config)
    if compute_boundaries and len(skills) > 1:
        task.boundaries = compute_cascade(task, demos.frames_of(0, task.frame_ids), cascade)
    return task, result, reports


def compute_cascade(
    task: TaskModel,
    frames: Dict[str, FrameInstance],
    config: Optional[CascadeConfig] = None,
    regularization: Optional[RegularizationConfig] = None,
) -> List[CascadeBoundary]:
    return [
        cascade_skills(a, b, frames, config, regularization) for a, b in zip(task.skills[:-1], task.skills[1:])
    ]


def velocity_command(prediction: RiemannianGaussian, velocity: str):
    """
    Translation, rotation increment and gripper width from a state-driven prediction.

    The factorized magnitudes are signed: a negative linear magnitude moves
    against the predicted direction and a negative angle turns about the
    reversed axis.
    """
    mean = prediction.mean
    if velocity == "naive":
        return mean[0:3], quat.from_rotvec(mean[3:6]), float(mean[6])
    lin_mag = float(mean[6])
    ang_mag = float(mean[7])
    f = FactorizedVelocity(mean[0:3], mean[3:6], lin_mag, ang_mag, lin_mag != 0.0, ang_mag != 0.0)
    x_dot, dq = compose(f)
    return x_dot, dq, float(mean[8])


def clamp_pose(current: np.ndarray, target: np.ndarray, v_max: float) -> np.ndarray:
    """Move from ``current`` toward ``target`` by at most ``v_max`` in position."""
    step = target[:3] - current[:3]
    distance = np.linalg.norm(step)
    if distance <= v_max:
        return target
    s = v_max / distance
    return np.concatenate([current[:3] + s * step, quat.slerp(current[3:7], target[3:7], s)])


def run_sequence(
    task: TaskModel,
    frames: Dict[str, FrameInstance],
    plant: Plant,
    config: Optional[ControllerConfig] = None,
    regularization: Optional[RegularizationConfig] = None,
    cascade: Optional[CascadeConfig] = None,
) -> RolloutTrace:
    """
    Execute the skills of ``task`` in order on ``plant``.

    A skill completes when more than ``switch_mass`` of the HMM state sits on
    its terminal component and, for time-driven skills, the normalized time
    has reached 1. A state-driven skill whose commands stay below
    ``settle_speed`` and ``settle_angle`` for ``settle_steps`` steps has its
    state moved to the successor components. The next skill's state starts
    from the current state distribution pushed through the cascade
    transitions, computed for this episode's frames when the switch happens.

    Args:
        task (TaskModel): Skills to run.
        frames (dict): Frame instances of the episode.
        plant (Plant): System that executes the commands.
        config (ControllerConfig, optional): Post-processing and budget.
        regularization (RegularizationConfig, optional): Adaptation options.
        cascade (CascadeConfig, optional): Boundary options; ``kl_samples``
            from ``config`` when omitted.

    Returns:
        RolloutTrace: Per-step records; ``diagnostic`` is set when a
        prediction was not finite.

    Exceptions:
        RolloutTimeoutError: The step budget ran out; carries the trace.
    """
    config = config or ControllerConfig()
    cascade = cascade or CascadeConfig(kl_samples=config.kl_samples)
    adapted = [adapt(s, frames, regularization) for s in task.skills]
    budget = config.max_steps or int(np.ceil(config.budget_factor * sum(s.T_bar for s in task.skills)))

    trace = RolloutTrace()
    index = 0
    state = new_state(adapted[0], task.skills[0].driver)
    t_step = 0
    settled = 0
    for step in range(budget):
        skill, model = task.skills[index], adapted[index]
        if skill.driver == "time":
            tau = min(t_step / max(skill.T_bar - 1, 1), 1.0)
            prediction = predict(model, state, [tau])
            if not np.all(np.isfinite(prediction.mean)):
                trace.diagnostic = f"non-finite prediction at step {step} (skill {index})"
                return trace
            target = prediction.mean[:7]
            command = clamp_pose(plant.pose, target, config.v_max) if config.post_processing == "clamp" else target
            plant.move_to(command, float(prediction.mean[7]))
            if config.post_processing != "threshold" or np.linalg.norm(plant.pose[:3] - target[:3]) <= config.delta:
                t_step += 1
            time_done = tau >= 1.0
        else:
            prediction = predict(model, state, plant.pose)
            if not np.all(np.isfinite(prediction.mean)):
                trace.diagnostic = f"non-finite prediction at step {step} (skill {index})"
                return trace
            x_dot, dq, gripper = velocity_command(prediction, skill.velocity)
            if config.post_processing == "clamp" and np.linalg.norm(x_dot) > config.v_max:
                x_dot = x_dot * (config.v_max / np.linalg.norm(x_dot))
            plant.move_by(x_dot, dq, gripper)
            at_rest = np.linalg.norm(x_dot) < config.settle_speed and float(quat.to_axis_angle(dq)[1]) < config.settle_angle
            settled = settled + 1 if at_rest else 0
            time_done = True

        weights = state.prior
        top = int(np.argmax(weights))
        pose = plant.pose
        trace.rows.append(
            dict(zip(TRACE_COLUMNS, [step, index, *pose.tolist(), float(plant.gripper), top, float(weights[top])]))
        )
        if time_done and weights[terminal_component(model)] > config.switch_mass:
            if index == len(task.skills) - 1:
                trace.completed = True
                return trace
            boundary = cascade_skills(task.skills[index], task.skills[index + 1], frames, cascade, regularization)
            handover = weights @ boundary.inter
            index += 1
            trace.switches.append(step)
            state = new_state(adapted[index], task.skills[index].driver)
            if handover.sum() > 0:
                state.initial = handover / handover.sum()
            t_step = 0
            settled = 0
        elif settled >= config.settle_steps:
            state.advance()
            settled = 0
    raise RolloutTimeoutError(f"rollout exceeded its budget of {budget} steps", trace=trace)
