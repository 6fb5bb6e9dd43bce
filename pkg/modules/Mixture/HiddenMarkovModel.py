"""
Hidden Markov models with Riemannian Gaussian emissions.

Fitting starts from :func:`init_time_binned` and is refined by
:func:`em_fit`, which runs a log-domain forward-backward pass per
demonstration.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import param
from scipy.special import logsumexp

from modules.Gaussian.RiemannianGaussian import (
    RiemannianGaussian,
    fit as fit_gaussian,
    log_pdf_many,
    marginal,
    tangent_covariance,
)
from modules.Manifold.Manifold import ManifoldDescriptor
from utils import globals as defaults
from utils.PipelineClasses import ConfigBase
from utils.errors import (
    ComponentPrunedWarning,
    ConvergenceError,
    ConvergenceWarning,
    DatasetSchemaError,
    EmptyBinError,
    ManifoldArgumentError,
)


class EMConfig(ConfigBase):
    max_iter = param.Integer(default=defaults.EM_MAX_ITER, bounds=(1, None), doc="EM iteration limit")
    tol = param.Number(
        default=defaults.EM_TOLERANCE, bounds=(0, None), doc="Relative log-likelihood improvement to stop at"
    )
    epsilon = param.Number(
        default=defaults.REGULARIZATION_FLOOR, bounds=(0, None), doc="Diagonal floor added to every covariance"
    )
    prune_mass = param.Number(
        default=defaults.PRUNE_MASS, bounds=(0, None), doc="Responsibility mass below which a component is pruned"
    )


def row_normalize(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


@dataclass(frozen=True, eq=False)
class HMMModel:
    """
    Priors, transitions and Gaussian components over one manifold.

    ``transition_counts`` are the (unnormalized) expected transition counts
    the transitions were normalized from. Keeping them lets a reversed model
    be built by transposing counts, which is an exact involution.
    """

    manifold: ManifoldDescriptor
    priors: np.ndarray
    transitions: np.ndarray
    components: Tuple[RiemannianGaussian, ...]
    transition_counts: np.ndarray = None
    log_likelihood_trace: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        transitions = np.asarray(self.transitions, dtype=float)
        components = tuple(self.components)
        K = len(components)
        if K == 0:
            raise ManifoldArgumentError("an HMM needs at least one component")
        if priors.shape != (K,) or transitions.shape != (K, K):
            raise ManifoldArgumentError(
                f"priors {priors.shape} and transitions {transitions.shape} do not match K={K}"
            )
        if abs(priors.sum() - 1.0) > 1e-9 or np.any(np.abs(transitions.sum(axis=1) - 1.0) > 1e-9):
            raise ManifoldArgumentError("priors and transition rows must each sum to 1")
        if any(c.manifold != self.manifold for c in components):
            raise ManifoldArgumentError("all components must share the model manifold")
        counts = transitions if self.transition_counts is None else np.asarray(self.transition_counts, dtype=float)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "transition_counts", counts)

    @property
    def K(self) -> int:
        return len(self.components)

    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    def to_dict(self) -> dict:
        return {
            "schema": defaults.SCHEMA_HMM,
            "manifold": self.manifold.to_dict(),
            "K": self.K,
            "priors": self.priors.tolist(),
            "transitions": self.transitions.tolist(),
            "transition_counts": self.transition_counts.tolist(),
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, values: dict, pointer: str = "") -> "HMMModel":
        if values.get("schema") != defaults.SCHEMA_HMM:
            raise DatasetSchemaError(
                f"expected schema '{defaults.SCHEMA_HMM}', got '{values.get('schema')}'", f"{pointer}/schema"
            )
        try:
            manifold = ManifoldDescriptor.from_dict(values["manifold"])
            components = [RiemannianGaussian.from_dict(manifold, c) for c in values["components"]]
            return cls(
                manifold,
                np.asarray(values["priors"], dtype=float),
                np.asarray(values["transitions"], dtype=float),
                tuple(components),
                np.asarray(values.get("transition_counts", values["transitions"]), dtype=float),
            )
        except KeyError as e:
            raise DatasetSchemaError(f"missing field {e}", pointer) from e
        except (ValueError, TypeError) as e:
            raise DatasetSchemaError(str(e), pointer) from e


def left_to_right_counts(K: int, self_transition: float = defaults.SELF_TRANSITION) -> np.ndarray:
    counts = np.eye(K) * self_transition + np.eye(K, k=1) * (1.0 - self_transition)
    counts[-1, -1] = 1.0
    return counts


def _fit_component(manifold, points, weights, epsilon, init, name: str) -> RiemannianGaussian:
    try:
        return fit_gaussian(manifold, points, weights, epsilon=epsilon, init=init)
    except ConvergenceError as e:
        warnings.warn(
            f"{name} mean stopped after {e.iterations} iterations (residual {e.residual:.3g})",
            ConvergenceWarning,
        )
        cov = tangent_covariance(manifold, e.last_iterate, points, weights) + epsilon * np.eye(manifold.tangent_dim)
        return RiemannianGaussian(manifold, e.last_iterate, cov)


def init_time_binned(
    manifold: ManifoldDescriptor,
    data: Sequence[np.ndarray],
    K: int = defaults.DEFAULT_K,
    epsilon: float = defaults.REGULARIZATION_FLOOR,
) -> HMMModel:
    """
    Initialize an HMM by splitting every demonstration into ``K`` equal time bins.

    Args:
        manifold (ManifoldDescriptor): Manifold of the samples.
        data (list of numpy.ndarray): Per-demo (T, ambient_dim) sample sequences.
        K (int): Number of components.
        epsilon (float): Covariance floor.

    Returns:
        HMMModel: Left-to-right model with all prior mass on the first component.

    Exceptions:
        EmptyBinError: A bin receives no samples.

    Side effects:
        Emits ``ConvergenceWarning`` when a bin mean stops at its iteration
        limit; the last iterate is used.
    """
    if K < 1:
        raise ManifoldArgumentError("K must be at least 1")
    bins: List[List[np.ndarray]] = [[] for _ in range(K)]
    for demo in data:
        demo = np.atleast_2d(demo)
        T = len(demo)
        index = (np.arange(T) * K) // T
        for k in range(K):
            bins[k].append(demo[index == k])
    components = []
    for k, chunks in enumerate(bins):
        samples = np.concatenate(chunks) if chunks else np.empty((0, manifold.ambient_dim))
        if len(samples) == 0:
            raise EmptyBinError(f"time bin {k} of {K} contains no samples", bin_index=k)
        components.append(_fit_component(manifold, samples, None, epsilon, None, f"time bin {k}"))
    counts = left_to_right_counts(K)
    priors = np.zeros(K)
    priors[0] = 1.0
    return HMMModel(manifold, priors, row_normalize(counts), tuple(components), counts)


def _log_transitions(transitions):
    with np.errstate(divide="ignore"):
        return np.log(transitions)


def forward_backward(model: HMMModel, log_emissions: np.ndarray):
    """
    Log-domain forward-backward pass over one sequence.

    Args:
        model (HMMModel): Model supplying priors and transitions.
        log_emissions (numpy.ndarray): (T, K) component log densities.

    Returns:
        tuple: ``(gamma, xi_sum, log_likelihood)`` with state posteriors
        (T, K), summed pairwise posteriors (K, K) and the sequence
        log-likelihood.
    """
    T, K = log_emissions.shape
    log_A = _log_transitions(model.transitions)
    with np.errstate(divide="ignore"):
        log_alpha = np.empty((T, K))
        log_alpha[0] = np.log(model.priors) + log_emissions[0]
    log_c = np.empty(T)
    log_c[0] = logsumexp(log_alpha[0])
    log_alpha[0] -= log_c[0]
    for t in range(1, T):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + log_A, axis=0) + log_emissions[t]
        log_c[t] = logsumexp(log_alpha[t])
        log_alpha[t] -= log_c[t]

    log_beta = np.zeros((T, K))
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(log_A + (log_emissions[t + 1] + log_beta[t + 1])[None, :], axis=1) - log_c[t + 1]

    gamma = np.exp(log_alpha + log_beta)
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi_sum = np.zeros((K, K))
    for t in range(T - 1):
        log_xi = log_alpha[t][:, None] + log_A + (log_emissions[t + 1] + log_beta[t + 1])[None, :] - log_c[t + 1]
        xi_sum += np.exp(log_xi)
    return gamma, xi_sum, float(log_c.sum())


def _emissions(model: HMMModel, demo) -> np.ndarray:
    return np.stack([log_pdf_many(c, demo) for c in model.components], axis=1)


def log_likelihood(model: HMMModel, data: Sequence[np.ndarray]) -> float:
    """Total log-likelihood of all sequences."""
    return float(sum(forward_backward(model, _emissions(model, np.atleast_2d(d)))[2] for d in data))


def _prune(model: HMMModel, keep: np.ndarray, components, counts, priors) -> Tuple:
    dropped = np.flatnonzero(~keep).tolist()
    warnings.warn(
        f"pruned components {dropped} with responsibility mass below threshold; K {len(keep)} -> {int(keep.sum())}",
        ComponentPrunedWarning,
    )
    counts = counts[np.ix_(keep, keep)]
    for i in np.flatnonzero(counts.sum(axis=1) == 0):
        counts[i, i] = 1.0
    priors = priors[keep]
    if priors.sum() <= 0:
        priors = np.zeros(len(priors))
        priors[0] = 1.0
    return [c for c, k in zip(components, keep) if k], counts, priors / priors.sum()


def em_fit(init: HMMModel, data: Sequence[np.ndarray], config: EMConfig = None) -> HMMModel:
    """
    Refine an HMM by Expectation Maximization over several demonstrations.

    Transition and prior entries that start at zero stay zero, so the
    left-to-right structure of a time-binned initialization is kept.

    Args:
        init (HMMModel): Starting model.
        data (list of numpy.ndarray): Per-demo (T, ambient_dim) sequences.
        config (EMConfig, optional): Iteration limit, tolerance and floors.

    Returns:
        HMMModel: The fitted model; ``log_likelihood_trace`` holds the data
        log-likelihood before every M-step.

    Side effects:
        Emits ``ComponentPrunedWarning`` when a component collapses and
        ``ConvergenceWarning`` when a component mean stops at its iteration
        limit.
    """
    config = config or EMConfig()
    data = [np.atleast_2d(np.asarray(d, dtype=float)) for d in data]
    manifold = init.manifold
    model = init
    trace: List[float] = []
    for iteration in range(config.max_iter):
        gammas, xi_total, ll = [], np.zeros((model.K, model.K)), 0.0
        prior_total = np.zeros(model.K)
        for demo in data:
            gamma, xi_sum, demo_ll = forward_backward(model, _emissions(model, demo))
            gammas.append(gamma)
            xi_total += xi_sum
            prior_total += gamma[0]
            ll += demo_ll
        if trace and ll - trace[-1] <= config.tol * abs(trace[-1]):
            trace.append(ll)
            break
        trace.append(ll)

        points = np.concatenate(data)
        responsibilities = np.concatenate(gammas)
        mass = responsibilities.sum(axis=0)
        keep = mass >= config.prune_mass

        components = []
        for k in range(model.K):
            if not keep[k]:
                components.append(None)
                continue
            components.append(
                _fit_component(manifold, points, responsibilities[:, k], config.epsilon, model.components[k].mean, f"component {k}")
            )

        counts = xi_total.copy()
        for i in np.flatnonzero(counts.sum(axis=1) <= 0):
            counts[i] = model.transitions[i]
        priors = prior_total / prior_total.sum()
        if not keep.all():
            components, counts, priors = _prune(model, keep, components, counts, priors)
        model = HMMModel(manifold, priors, row_normalize(counts), tuple(components), counts)

    return HMMModel(
        manifold, model.priors, model.transitions, model.components, model.transition_counts, tuple(trace)
    )


def marginalize(m: HMMModel, dims: Sequence[int]) -> HMMModel:
    """
    Restrict every component to the factors ``dims``; priors and transitions are kept.
    """
    dims = list(dims)
    if not dims:
        raise ManifoldArgumentError("cannot marginalize onto an empty factor set")
    components = tuple(marginal(c, dims) for c in m.components)
    return HMMModel(components[0].manifold, m.priors, m.transitions, components, m.transition_counts)
