"""
Gaussian mixture regression with the HMM forward-variable prior.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax
from scipy.stats import multivariate_normal

from modules.Gaussian.RiemannianGaussian import (
    RiemannianGaussian,
    condition,
    marginal,
    mle_mean,
    symmetrize,
)
from modules.Manifold.Manifold import parallel_transport
from modules.Mixture.HiddenMarkovModel import HMMModel
from utils.errors import ConvergenceError, ConvergenceWarning

# Below this total probability the state estimate is treated as underflowed.
RESET_LOG_THRESHOLD = float(np.log(np.finfo(float).tiny))
NEGLIGIBLE_WEIGHT = 1e-12


@dataclass
class GmrState:
    """
    Single-owner regression state.

    ``prior`` is the previous step's state distribution; ``None`` means the
    next step starts from ``initial``, or from the model priors when that is
    ``None`` too. ``weights`` records every step's
    component weights and ``resets`` the steps at which the prior was reset.
    """

    model: HMMModel
    in_dims: Sequence[int]
    prior: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = None
    weights: List[np.ndarray] = field(default_factory=list)
    resets: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.in_dims = list(self.in_dims)
        self._input_marginals = [marginal(c, self.in_dims) for c in self.model.components]
        self._input_densities = [multivariate_normal(cov=g.cov) for g in self._input_marginals]

    @property
    def out_dims(self) -> List[int]:
        return [d for d in range(len(self.model.manifold)) if d not in self.in_dims]

    def input_log_likelihoods(self, value) -> np.ndarray:
        return np.array(
            [d.logpdf(g.manifold.log(g.mean, value)) for g, d in zip(self._input_marginals, self._input_densities)]
        )

    def reset(self) -> None:
        self.prior = None
        self.weights.clear()
        self.resets.clear()

    def advance(self) -> None:
        """
        Move the mass of every component to its most probable successor.

        Components without a successor keep their mass.
        """
        if self.prior is None:
            return
        A = self.model.transitions
        moved = np.zeros_like(self.prior)
        for k, mass in enumerate(self.prior):
            others = A[k].copy()
            others[k] = 0.0
            moved[int(np.argmax(others)) if others.max() > 0 else k] += mass
        self.prior = moved


def _stateless_log_weights(state: GmrState, log_lik: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(state.model.priors) + log_lik
    # no component with prior mass explains the input
    if logsumexp(log_w) < RESET_LOG_THRESHOLD:
        return log_lik
    return log_w


def stateless_weights(state: GmrState, value) -> np.ndarray:
    """
    Component weights from the model priors and the input likelihoods alone.

    Falls back to the likelihoods when the components that carry prior mass
    all underflow at ``value``.
    """
    return softmax(_stateless_log_weights(state, state.input_log_likelihoods(value)))


def moment_match(components: Sequence[RiemannianGaussian], weights) -> RiemannianGaussian:
    """
    Collapse a weighted mixture into one Gaussian.

    The mean is the weighted Fréchet mean of the component means; the
    covariance is the weighted sum of the transported component covariances
    and the spread of the means around the result.
    """
    weights = np.asarray(weights, dtype=float)
    manifold = components[0].manifold
    means = np.array([c.mean for c in components])
    init = means[int(np.argmax(weights))]
    try:
        mean = mle_mean(manifold, means, weights, init=init)
    except ConvergenceError as e:
        warnings.warn(f"regression mean stopped with residual {e.residual:.3g}", ConvergenceWarning)
        mean = e.last_iterate
    cov = np.zeros((manifold.tangent_dim, manifold.tangent_dim))
    for w, c in zip(weights, components):
        u = manifold.log(mean, c.mean)
        cov += w * (parallel_transport(manifold, c.cov, c.mean, mean) + np.outer(u, u))
    return RiemannianGaussian(manifold, mean, symmetrize(cov))


def gmr_step(state: GmrState, value) -> Tuple[RiemannianGaussian, GmrState]:
    """
    One regression step.

    The weights combine the previous state distribution propagated through
    the transitions with the likelihood of ``value`` under each component's
    input marginal. If that product underflows for every component the prior
    is reset and the stateless weights (model priors times likelihoods) are
    used instead.

    Args:
        state (GmrState): Regression state, updated in place.
        value (array-like): Ambient coordinates of the input factors.

    Returns:
        tuple: The moment-matched conditional Gaussian over the output
        factors and the updated state.
    """
    model = state.model
    value = np.asarray(value, dtype=float)
    log_lik = state.input_log_likelihoods(value)
    if state.prior is not None:
        predicted = state.prior @ model.transitions
    else:
        predicted = model.priors if state.initial is None else state.initial
    with np.errstate(divide="ignore"):
        log_w = np.log(predicted) + log_lik
    if logsumexp(log_w) < RESET_LOG_THRESHOLD:
        state.resets.append(len(state.weights))
        log_w = _stateless_log_weights(state, log_lik)
    h = softmax(log_w)
    state.prior = h
    state.weights.append(h)

    active = np.flatnonzero(h > NEGLIGIBLE_WEIGHT)
    conditionals = [condition(model.components[k], state.in_dims, value) for k in active]
    if len(conditionals) == 1:
        return conditionals[0], state
    return moment_match(conditionals, h[active] / h[active].sum()), state
