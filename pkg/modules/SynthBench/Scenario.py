"""
Synthetic manipulation scenarios and their demonstration generator.

A scenario declares candidate frames with sampling ranges, a start pose, and
a skill plan. Every skill is one minimum-jerk motion to a waypoint expressed
in one of the frames, followed by a pause in which the gripper changes.
"""

from typing import Dict, List, Optional

import numpy as np
import param

from modules.Manifold import Quaternion as quat
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet, FrameInstance
from utils.PipelineClasses import ConfigBase
from utils.errors import ScenarioError

DOWN = [0.0, 1.0, 0.0, 0.0]
OPEN = 0.08
CLOSED = 0.0


def _fixed(position=(0.0, 0.0, 0.0)) -> dict:
    return {"low": list(position), "high": list(position), "yaw": [0.0, 0.0]}


def _clutter() -> dict:
    return {"low": [0.2, -0.4, 0.0], "high": [0.7, 0.4, 0.0], "yaw": [-np.pi, np.pi]}


BUILTIN = {
    "pick_and_place": {
        "frames": {
            "world": _fixed(),
            "object": {"low": [0.35, -0.30, 0.0], "high": [0.60, -0.10, 0.0], "yaw": [-np.pi / 4, np.pi / 4]},
            "target": {"low": [0.35, 0.10, 0.0], "high": [0.60, 0.30, 0.0], "yaw": [-np.pi / 4, np.pi / 4]},
            "clutter_0": _clutter(),
            "clutter_1": _clutter(),
            "clutter_2": _clutter(),
        },
        "plan": [
            {"frame": "object", "offset": [0.0, 0.0, 0.12], "rotation": DOWN, "gripper": OPEN, "duration": 60},
            {"frame": "object", "offset": [0.0, 0.0, 0.0], "rotation": DOWN, "gripper": CLOSED, "duration": 40},
            {"frame": "target", "offset": [0.0, 0.0, 0.12], "rotation": DOWN, "gripper": CLOSED, "duration": 70},
            {"frame": "target", "offset": [0.0, 0.0, 0.0], "rotation": DOWN, "gripper": CLOSED, "duration": 40},
        ],
        "goal": {"frame": "target", "offset": [0.0, 0.0, 0.0]},
        "grasp_skill": 1,
    },
    "lift": {
        "frames": {
            "world": _fixed(),
            "object": {"low": [0.35, -0.20, 0.0], "high": [0.60, 0.20, 0.0], "yaw": [-np.pi / 4, np.pi / 4]},
            "clutter_0": _clutter(),
        },
        "plan": [
            {"frame": "object", "offset": [0.0, 0.0, 0.0], "rotation": DOWN, "gripper": CLOSED, "duration": 70},
            {"frame": "object", "offset": [0.0, 0.0, 0.20], "rotation": DOWN, "gripper": CLOSED, "duration": 50},
        ],
        "goal": {"frame": "object", "offset": [0.0, 0.0, 0.20]},
        "grasp_skill": 0,
    },
}


class ScenarioSpec(ConfigBase):
    """
    Configuration of a synthetic scenario.

    ``frames`` maps frame ids to ``{"low", "high", "yaw"}`` sampling ranges;
    ``plan`` lists skills as ``{"frame", "offset", "rotation", "gripper",
    "duration"}``; ``goal`` names the frame and offset the object must end at.
    """

    name = param.String(default="pick_and_place", doc="Scenario name")
    n_demos = param.Integer(default=5, bounds=(1, None), doc="Number of demonstrations")
    seed = param.Integer(default=0, doc="Generator seed")
    dt = param.Number(default=0.05, bounds=(0, None), inclusive_bounds=(False, True), doc="Control period (s)")
    sigma_pos = param.Number(default=1e-3, bounds=(0, None), doc="Waypoint position noise (m)")
    sigma_rot = param.Number(default=0.01, bounds=(0, None), doc="Waypoint orientation noise (rad)")
    jitter = param.Number(default=5e-5, bounds=(0, None), doc="Per-sample position noise (m)")
    duration_spread = param.Number(default=0.2, bounds=(0, 0.9), doc="Relative spread of skill durations")
    pause_len = param.Integer(default=20, bounds=(1, None), doc="Pause after each skill (steps)")
    start_position = param.List(default=[0.45, 0.0, 0.35], item_type=float, doc="Nominal start position (m)")
    start_rotation = param.List(default=list(DOWN), item_type=float, doc="Start orientation (w, x, y, z)")
    start_spread = param.Number(default=0.005, bounds=(0, None), doc="Start position noise (m)")
    frames = param.Dict(default={}, doc="Frame samplers")
    plan = param.List(default=[], doc="Skill plan")
    goal = param.Dict(default={}, doc="Success goal: frame id and offset")
    object_frame = param.String(default="object", doc="Frame of the manipulated object")
    grasp_skill = param.Integer(default=0, bounds=(0, None), doc="Skill after which the gripper closes")

    def to_dict(self) -> dict:
        # the scenario name is a setting here, not just an object label
        return dict(super().to_dict(), name=self.name)


def builtin_scenario(name: str = "pick_and_place", **overrides) -> ScenarioSpec:
    """
    One of the built-in scenarios (``pick_and_place`` or ``lift``) with overrides applied.
    """
    if name not in BUILTIN:
        raise ScenarioError(f"unknown scenario '{name}', expected one of {sorted(BUILTIN)}")
    values = {k: v for k, v in BUILTIN[name].items()}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioSpec(name=name, **values)


def resolve(spec: ScenarioSpec) -> ScenarioSpec:
    """Fill an incomplete spec from the built-in scenario of the same name."""
    if spec.plan and spec.frames:
        return spec
    if spec.name not in BUILTIN:
        raise ScenarioError(f"scenario '{spec.name}' declares no plan and is not built in")
    values = spec.to_dict()
    values.update({k: v for k, v in BUILTIN[spec.name].items() if not values.get(k)})
    return ScenarioSpec(**values)


def validate(spec: ScenarioSpec) -> None:
    if not spec.plan:
        raise ScenarioError("scenario has an empty skill plan")
    for i, step in enumerate(spec.plan):
        if step["frame"] not in spec.frames:
            raise ScenarioError(f"skill {i} refers to undeclared frame '{step['frame']}'")
        if int(step["duration"]) < 2:
            raise ScenarioError(f"skill {i} needs a duration of at least 2 steps")
    if spec.goal and spec.goal.get("frame") not in spec.frames:
        raise ScenarioError(f"goal refers to undeclared frame '{spec.goal.get('frame')}'")


def sample_frames(spec: ScenarioSpec, rng: np.random.Generator) -> Dict[str, FrameInstance]:
    """
    Draw one instance of every declared frame: uniform position in its box, uniform yaw.
    """
    frames = {}
    for frame_id in sorted(spec.frames):
        sampler = spec.frames[frame_id]
        origin = rng.uniform(sampler["low"], sampler["high"])
        yaw = rng.uniform(*sampler["yaw"])
        frames[frame_id] = FrameInstance(quat.from_axis_angle([0.0, 0.0, 1.0], yaw), origin, frame_id)
    return frames


def sample_start(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    position = np.asarray(spec.start_position, dtype=float) + rng.normal(0.0, spec.start_spread, 3)
    return np.concatenate([position, quat.normalize(spec.start_rotation)])


def waypoint(step: dict, frames: Dict[str, FrameInstance]) -> np.ndarray:
    frame = frames[step["frame"]]
    position = frame.to_world(step["offset"])
    rotation = quat.normalize(quat.qmul(frame.rotation, quat.normalize(step["rotation"])))
    return np.concatenate([position, rotation])


def goal_position(spec: ScenarioSpec, frames: Dict[str, FrameInstance]) -> np.ndarray:
    return frames[spec.goal["frame"]].to_world(spec.goal.get("offset", [0.0, 0.0, 0.0]))


def minimum_jerk(start: np.ndarray, end: np.ndarray, steps: int) -> np.ndarray:
    """
    Poses after each of ``steps`` samples of a minimum-jerk motion (excluding ``start``).

    Positions follow ``10τ³ - 15τ⁴ + 6τ⁵``; orientations are slerped on the
    same profile.
    """
    tau = np.arange(1, steps + 1) / steps
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    positions = start[:3] + s[:, None] * (end[:3] - start[:3])
    rotations = quat.slerp(start[3:], end[3:], s)
    return np.hstack([positions, rotations])


def generate_demo(spec: ScenarioSpec, rng: np.random.Generator, frames: Optional[Dict[str, FrameInstance]] = None) -> Demonstration:
    frames = frames or sample_frames(spec, rng)
    pose = sample_start(spec, rng)
    poses: List[np.ndarray] = [pose[None, :]]
    gripper = float(OPEN)
    widths: List[float] = [gripper]
    for i, step in enumerate(spec.plan):
        target = waypoint(step, frames)
        target[:3] += rng.normal(0.0, spec.sigma_pos, 3)
        target[3:] = quat.normalize(quat.qmul(quat.from_rotvec(rng.normal(0.0, spec.sigma_rot, 3)), target[3:]))
        if np.allclose(target[:3], pose[:3], atol=1e-9) and abs(abs(np.dot(target[3:], pose[3:])) - 1.0) < 1e-12:
            raise ScenarioError(f"skill {i} has a zero-length segment")
        steps = max(2, int(round(step["duration"] * rng.uniform(1.0 - spec.duration_spread, 1.0 + spec.duration_spread))))
        motion = minimum_jerk(pose, target, steps)
        poses.append(motion)
        widths += [gripper] * steps
        pose = motion[-1]
        if i < len(spec.plan) - 1:
            gripper = float(step["gripper"])
            poses.append(np.repeat(pose[None, :], spec.pause_len, axis=0))
            widths += [gripper] * spec.pause_len
    stacked = np.vstack(poses)
    stacked[:, :3] += rng.normal(0.0, spec.jitter, stacked[:, :3].shape)
    stacked[:, 3:] = quat.make_continuous(stacked[:, 3:])
    return Demonstration(np.arange(len(stacked)) * spec.dt, stacked, np.asarray(widths), frames)


def generate(spec: ScenarioSpec) -> DemonstrationSet:
    """
    Generate the demonstrations of a scenario; identical specs give identical data.

    Exceptions:
        ScenarioError: The plan is invalid or contains a zero-length segment.
    """
    spec = resolve(spec)
    validate(spec)
    rng = np.random.default_rng(spec.seed)
    demos = [generate_demo(spec, rng) for _ in range(spec.n_demos)]
    metadata = {"scenario": spec.to_dict()}
    return DemonstrationSet(spec.dt, demos, metadata)
