"""
Task-parameter selection from the precision of single-frame models.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import param
from scipy.special import softmax

from modules.Actions.Factorization import model_manifold
from modules.Mixture.HiddenMarkovModel import init_time_binned
from modules.TaskParameterized.TaskParameterizedHMM import project_demos
from modules.TaskParameterized.Frames import DemonstrationSet
from utils import globals as defaults
from utils.PipelineClasses import ConfigBase
from utils.errors import FrameSelectionWarning, ManifoldArgumentError

# (pos, rot) factors of the single-frame time-driven layout
POSE_FACTORS = [1, 2]


class SelectionConfig(ConfigBase):
    tau = param.Number(
        default=None, bounds=(0, 1), inclusive_bounds=(False, False), allow_None=True,
        doc="Relevance threshold; defaults to 2/C (0.5 for C <= 2)",
    )
    K = param.Integer(default=defaults.DEFAULT_K, bounds=(1, None), doc="Components of the scoring models")
    mode = param.Selector(
        default="per_skill", objects=["per_skill", "global", "none"],
        doc="Score every skill, score the whole task once, or keep every candidate",
    )
    epsilon = param.Number(default=defaults.REGULARIZATION_FLOOR, bounds=(0, None), doc="Covariance floor")


def default_tau(C: int) -> float:
    """
    Twice the uniform share, ``2 / C``.

    With one or two candidates ``2 / C`` is not below 1 and no frame could
    pass it, so those cases use 0.5 instead.
    """
    tau = 2.0 / C
    return tau if tau < 1.0 else 0.5


@dataclass
class RelevanceReport:
    """
    Frame relevance of one skill.

    ``shares[k, c]`` is candidate ``c``'s share of the pose precision
    determinant in component ``k``; ``omega`` is the column maximum.
    """

    skill: int
    candidates: List[str]
    shares: np.ndarray
    selected: List[str] = field(default_factory=list)
    tau: Optional[float] = None

    @property
    def omega(self) -> np.ndarray:
        return self.shares.max(axis=0)

    def to_dict(self) -> dict:
        return {
            "schema": defaults.SCHEMA_RELEVANCE,
            "skill": self.skill,
            "candidates": list(self.candidates),
            "omega": dict(zip(self.candidates, self.omega.tolist())),
            "selected": list(self.selected),
            "tau": self.tau,
            "shares": self.shares.tolist(),
        }

    def shares_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.shares, columns=self.candidates)
        df.insert(0, "component", np.arange(len(df)))
        df.insert(0, "skill", self.skill)
        return df


def pose_log_determinants(demos: DemonstrationSet, frame_id: str, K: int, epsilon: float) -> np.ndarray:
    """
    Log-determinant of every component's pose covariance in a single-frame model.
    """
    manifold = model_manifold(1, "time")
    model = init_time_binned(manifold, project_demos(demos, [frame_id], "time"), K, epsilon=epsilon)
    idx = manifold.tangent_index(POSE_FACTORS)
    logdets = []
    for c in model.components:
        block = c.cov[np.ix_(idx, idx)]
        sign, logdet = np.linalg.slogdet(block)
        if sign <= 0:
            sign, logdet = np.linalg.slogdet(block + epsilon * np.eye(len(idx)))
        logdets.append(logdet)
    return np.array(logdets)


def score_candidates(
    demos: DemonstrationSet,
    candidates: Sequence[str],
    K: int = defaults.DEFAULT_K,
    epsilon: float = defaults.REGULARIZATION_FLOOR,
    skill: int = 0,
) -> RelevanceReport:
    """
    Score candidate frames for one skill.

    Every candidate gets its own time-driven model from the time-binned
    initialization alone. Per component, candidates share the pose precision
    determinant, normalized over candidates.

    Args:
        demos (DemonstrationSet): Aligned demonstrations of the skill.
        candidates (list of str): Candidate frame ids.
        K (int): Number of time bins.

    Returns:
        RelevanceReport: Shares and relevances; candidates sorted by id.
    """
    candidates = sorted(candidates)
    if not candidates:
        raise ManifoldArgumentError("frame selection needs at least one candidate")
    logdets = np.stack([pose_log_determinants(demos, f, K, epsilon) for f in candidates], axis=1)
    # det(Σ)⁻¹ / Σ_c det(Σ_c)⁻¹ in log space
    shares = softmax(-logdets, axis=1)
    return RelevanceReport(skill, candidates, shares)


def select(report: RelevanceReport, tau: Optional[float] = None) -> List[str]:
    """
    Frames whose relevance exceeds ``tau``; the most relevant frame if none does.

    Side effects:
        Sets ``report.selected`` and ``report.tau``. Emits a
        ``FrameSelectionWarning`` on the fallback.
    """
    tau = default_tau(len(report.candidates)) if tau is None else tau
    if not 0.0 < tau < 1.0:
        raise ManifoldArgumentError(f"tau must lie in (0, 1), got {tau}")
    omega = report.omega
    selected = [f for f, w in zip(report.candidates, omega) if w > tau]
    if not selected:
        best = report.candidates[int(np.argmax(omega))]
        warnings.warn(
            f"skill {report.skill}: no frame above tau={tau:.3g}; falling back to '{best}' (omega {omega.max():.3g})",
            FrameSelectionWarning,
        )
        selected = [best]
    report.selected = selected
    report.tau = tau
    return selected
