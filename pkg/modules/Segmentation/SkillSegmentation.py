"""
Skill segmentation by thresholding action magnitudes, and temporal alignment by resampling.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
import param

from modules.Actions.Factorization import factorize_trajectory
from modules.Manifold import Quaternion as quat
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet
from utils.PipelineClasses import ConfigBase
from utils.errors import InconsistentSegmentationError, ManifoldArgumentError


class SegmentationConfig(ConfigBase):
    vel_threshold = param.Number(
        default=1e-3, bounds=(0, None), inclusive_bounds=(False, True), doc="Magnitude threshold (m/step)"
    )
    min_pause_len = param.Integer(default=5, bounds=(1, None), doc="Shortest pause run kept, in steps")
    boundary_margin = param.Integer(default=10, bounds=(1, None), doc="Steps excluded at both ends of a demo")
    expected_skills = param.Integer(default=None, bounds=(1, None), allow_None=True, doc="Skills per demo, if known")
    alpha = param.Number(default=0.1, bounds=(0, None), doc="Weight of the angular magnitude (m/rad)")
    enabled = param.Boolean(default=True, doc="Treat every demo as a single skill when off")


@dataclass
class SegmentationResult:
    cuts: List[List[int]]
    skill_count: int
    durations: List[int]

    def to_dict(self) -> dict:
        return {"cuts": [list(map(int, c)) for c in self.cuts], "skill_count": self.skill_count, "durations": self.durations}


def action_magnitudes(demo: Demonstration, alpha: float = 0.1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-step linear and angular magnitudes and their combination ``lin + alpha * ang``.
    """
    f = factorize_trajectory(demo.positions, demo.quaternions)
    return f["lin_mag"], f["ang_mag"], f["lin_mag"] + alpha * f["ang_mag"]


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Inclusive (start, end) index pairs of the True runs in ``mask``."""
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(s), int(e) - 1) for s, e in zip(edges[::2], edges[1::2])]


def find_cuts(demo: Demonstration, cfg: SegmentationConfig = None) -> List[int]:
    """
    Cut indices of one demonstration.

    Runs of steps whose combined magnitude is below ``vel_threshold`` are
    pause candidates. Runs shorter than ``min_pause_len`` or touching the
    boundary margins are dropped; every remaining run contributes its center.
    With ``expected_skills`` set only the ``expected_skills - 1`` longest runs
    are kept, the earlier run winning ties.

    Args:
        demo (Demonstration): The demonstration.
        cfg (SegmentationConfig, optional): Thresholds.

    Returns:
        list of int: Ascending cut indices, possibly empty.
    """
    cfg = cfg or SegmentationConfig()
    T = len(demo)
    if T <= 2 * cfg.boundary_margin:
        raise ManifoldArgumentError(
            f"demo of length {T} is too short for a boundary margin of {cfg.boundary_margin} steps"
        )
    _, _, magnitude = action_magnitudes(demo, cfg.alpha)
    runs = [
        (s, e)
        for s, e in _runs(magnitude < cfg.vel_threshold)
        if e - s + 1 >= cfg.min_pause_len and s >= cfg.boundary_margin and e < T - cfg.boundary_margin
    ]
    if cfg.expected_skills is not None and len(runs) > cfg.expected_skills - 1:
        order = sorted(range(len(runs)), key=lambda i: (-(runs[i][1] - runs[i][0]), i))
        runs = sorted(runs[i] for i in order[: cfg.expected_skills - 1])
    return [(s + e) // 2 for s, e in runs]


def resample_demo(demo: Demonstration, start: int, stop: int, length: int) -> Demonstration:
    """
    Resample samples ``start..stop`` (inclusive) of ``demo`` to ``length`` samples.

    Positions, gripper and time are interpolated linearly and orientations by
    slerp; both endpoints are reproduced exactly.
    """
    if length < 2 or stop <= start:
        raise ManifoldArgumentError(f"cannot resample [{start}, {stop}] to {length} samples")
    s = np.linspace(start, stop, length)
    j = np.minimum(np.floor(s).astype(int), stop - 1)
    frac = s - j

    def lerp(values):
        values = np.asarray(values, dtype=float)
        a, b = values[j], values[j + 1]
        w = frac.reshape((-1,) + (1,) * (values.ndim - 1))
        return (1.0 - w) * a + w * b

    quats = demo.quaternions
    rot = np.array([quat.slerp(quats[i], quats[i + 1], f) for i, f in zip(j, frac)])
    return Demonstration(lerp(demo.time), np.hstack([lerp(demo.positions), rot]), lerp(demo.gripper), dict(demo.frames))


def segment_and_align(
    demos: DemonstrationSet, cfg: SegmentationConfig = None
) -> Tuple[SegmentationResult, List[DemonstrationSet]]:
    """
    Split every demo at its cuts and resample each skill to its mean duration.

    Neighbouring skills share their cut sample.

    Returns:
        tuple: The :class:`SegmentationResult` and one
        :class:`DemonstrationSet` per skill.

    Exceptions:
        InconsistentSegmentationError: Demos produced different cut counts.
    """
    cfg = cfg or SegmentationConfig()
    if cfg.enabled:
        cuts = [find_cuts(demo, cfg) for demo in demos]
    else:
        cuts = [[] for _ in demos]
    counts = [len(c) for c in cuts]
    if len(set(counts)) > 1:
        raise InconsistentSegmentationError(
            f"demos produced different cut counts {counts}; adjust the thresholds or set expected_skills",
            cut_counts=counts,
        )
    skill_count = counts[0] + 1 if counts else 0
    bounds = [list(zip([0] + c, c + [len(d) - 1])) for c, d in zip(cuts, demos)]
    durations = [int(round(np.mean([b[s][1] - b[s][0] + 1 for b in bounds]))) for s in range(skill_count)]
    skills = []
    for s in range(skill_count):
        resampled = [resample_demo(d, *b[s], durations[s]) for d, b in zip(demos, bounds)]
        skills.append(DemonstrationSet(demos.dt, resampled, dict(demos.metadata, skill=s)))
    return SegmentationResult(cuts, skill_count, durations), skills


def magnitudes_frame(demos: DemonstrationSet, result: SegmentationResult, alpha: float = 0.1) -> pd.DataFrame:
    """
    Per-step magnitudes with cut markers; columns demo, t, lin_mag, ang_mag, is_cut.
    """
    frames = []
    for n, demo in enumerate(demos):
        lin, ang, _ = action_magnitudes(demo, alpha)
        is_cut = np.zeros(len(demo), dtype=bool)
        is_cut[result.cuts[n]] = True
        frames.append(pd.DataFrame({"demo": n, "t": np.arange(len(demo)), "lin_mag": lin, "ang_mag": ang, "is_cut": is_cut}))
    return pd.concat(frames, ignore_index=True)
