"""
Cascading of skill HMMs and skill reversal.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import param

from modules.Actions.Factorization import frame_dims
from modules.Gaussian.RiemannianGaussian import RegularizationConfig, RiemannianGaussian, kl_monte_carlo, marginal
from modules.Mixture.HiddenMarkovModel import HMMModel, marginalize, row_normalize
from modules.TaskParameterized.Frames import FrameInstance
from modules.TaskParameterized.TaskParameterizedHMM import SkillModel, adapt, align_hemisphere
from utils import globals as defaults
from utils.PipelineClasses import ConfigBase
from utils.errors import NoCommonDimensionsError, UnsupportedDriverError


class CascadeConfig(ConfigBase):
    kl_samples = param.Integer(default=defaults.KL_SAMPLES, bounds=(1, None), doc="Monte-Carlo samples per KL")
    boundary_fraction = param.Number(
        default=0.25, bounds=(0, 1), inclusive_bounds=(False, True),
        doc="Fraction of components at each end of a skill that are linked",
    )
    full = param.Boolean(default=False, doc="Link every component pair instead of the boundary ones")
    seed = param.Integer(default=0, doc="Seed of the Monte-Carlo KL estimates")


@dataclass(eq=False)
class CascadeBoundary:
    """
    Outgoing transitions of a skill at its boundary to the next one.

    Every row of ``[intra, inter]`` sums to 1.
    """

    intra: np.ndarray
    inter: np.ndarray
    kl: np.ndarray
    shared_frames: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "intra": self.intra.tolist(),
            "inter": self.inter.tolist(),
            "kl": np.where(np.isfinite(self.kl), self.kl, -1.0).tolist(),
            "shared_frames": list(self.shared_frames),
        }

    @classmethod
    def from_dict(cls, values: dict) -> "CascadeBoundary":
        kl = np.asarray(values["kl"], dtype=float)
        return cls(
            np.asarray(values["intra"], dtype=float),
            np.asarray(values["inter"], dtype=float),
            np.where(kl < 0, np.inf, kl),
            tuple(values.get("shared_frames", ())),
        )


def common_dims(m1, m2) -> Tuple[List[int], List[int]]:
    """
    Matching factor indices of two manifolds by label and kind, time excluded.
    """
    dims1, dims2 = [], []
    for i, f in enumerate(m1.factors):
        if f.label == "time":
            continue
        for j, g in enumerate(m2.factors):
            if j not in dims2 and g.label == f.label and g.kind == f.kind and g.to_dict() == f.to_dict():
                dims1.append(i)
                dims2.append(j)
                break
    return dims1, dims2


def component_order(h: HMMModel) -> List[int]:
    """Components in temporal order: by mean time when the model has a time factor, else by index."""
    if h.manifold.factors[0].label == "time":
        return [int(k) for k in np.argsort([c.mean[0] for c in h.components], kind="stable")]
    return list(range(h.K))


def terminal_component(h: HMMModel) -> int:
    return component_order(h)[-1]


def boundary_components(h: HMMModel, fraction: float, tail: bool) -> List[int]:
    order = component_order(h)
    n = max(1, int(np.ceil(h.K * fraction)))
    return order[-n:] if tail else order[:n]


def cascade_pair(h1: HMMModel, h2: HMMModel, config: Optional[CascadeConfig] = None) -> CascadeBoundary:
    """
    Link two adapted HMMs with transitions proportional to exp(-KL).

    The KL divergences are estimated by Monte-Carlo sampling between the
    components of ``h1`` and ``h2`` marginalized onto their common factors.
    Each row of ``h1``'s transitions is renormalized jointly with its new
    outgoing entries.

    Args:
        h1 (HMMModel): Adapted model of the earlier skill.
        h2 (HMMModel): Adapted model of the later skill.
        config (CascadeConfig, optional): Sampling and linking options.

    Returns:
        CascadeBoundary: Renormalized intra-skill and inter-skill blocks.

    Exceptions:
        NoCommonDimensionsError: The models share no factor apart from time.
    """
    config = config or CascadeConfig()
    dims1, dims2 = common_dims(h1.manifold, h2.manifold)
    if not dims1:
        raise NoCommonDimensionsError(
            f"no common dimensions between {h1.manifold.labels()} and {h2.manifold.labels()}"
        )
    rows = range(h1.K) if config.full else boundary_components(h1, config.boundary_fraction, tail=True)
    cols = range(h2.K) if config.full else boundary_components(h2, config.boundary_fraction, tail=False)
    left = [marginal(c, dims1) for c in h1.components]
    right = [marginal(c, dims2) for c in h2.components]

    kl = np.full((h1.K, h2.K), np.inf)
    for i in rows:
        for j in cols:
            q = align_hemisphere(right[j], left[i])
            kl[i, j] = kl_monte_carlo(left[i], q, n=config.kl_samples, seed=config.seed + i * h2.K + j)
    links = np.exp(-kl)
    norm = 1.0 + links.sum(axis=1, keepdims=True)
    return CascadeBoundary(h1.transitions / norm, links / norm, kl)


def restrict_frames(m: SkillModel, frame_ids: Sequence[str]) -> SkillModel:
    """
    The skill's joint model marginalized onto a subset of its frames.
    """
    positions = [m.selected_frames.index(f) for f in frame_ids]
    F = m.F
    dims = sorted({d for p in positions for d in frame_dims(F, m.driver, p, m.velocity)})
    joint = marginalize(m.model, dims)
    return SkillModel(m.driver, tuple(frame_ids), joint, m.T_bar, m.dt, m.velocity, m.name)


def cascade_skills(
    s1: SkillModel,
    s2: SkillModel,
    frames: Dict[str, FrameInstance],
    config: Optional[CascadeConfig] = None,
    regularization: Optional[RegularizationConfig] = None,
) -> CascadeBoundary:
    """
    Cascade two skills for one set of frame instances.

    When the skills share frames both are adapted on the shared frames only,
    otherwise on their own selections; the world pose is common either way.
    """
    shared = [f for f in s1.selected_frames if f in s2.selected_frames]
    if shared:
        h1 = adapt(restrict_frames(s1, shared), frames, regularization)
        h2 = adapt(restrict_frames(s2, shared), frames, regularization)
    else:
        h1 = adapt(s1, frames, regularization)
        h2 = adapt(s2, frames, regularization)
    boundary = cascade_pair(h1, h2, config)
    boundary.shared_frames = tuple(shared)
    return boundary


def reverse_skill(m: SkillModel) -> SkillModel:
    """
    Play a time-driven skill backwards.

    Component times map to ``1 - t`` (the time row and column of every
    covariance change sign), expected transition counts are transposed and the
    prior moves to the component that now comes first. Reversing twice gives
    back the original model.

    Exceptions:
        UnsupportedDriverError: ``m`` is not time driven.
    """
    if m.driver != "time":
        raise UnsupportedDriverError(f"only time-driven skills can be reversed, '{m.name}' is {m.driver}-driven")
    model = m.model
    flip = np.ones(model.manifold.tangent_dim)
    flip[model.manifold.tangent_slices[0]] = -1.0
    components = []
    for c in model.components:
        mean = c.mean.copy()
        mean[0] = 1.0 - mean[0]
        components.append(RiemannianGaussian(model.manifold, mean, c.cov * np.outer(flip, flip)))
    counts = model.transition_counts.T.copy()
    priors = np.zeros(model.K)
    priors[int(np.argmin([c.mean[0] for c in components]))] = 1.0
    reversed_model = HMMModel(model.manifold, priors, row_normalize(counts), tuple(components), counts)
    return SkillModel(m.driver, m.selected_frames, reversed_model, m.T_bar, m.dt, m.velocity, m.name)
