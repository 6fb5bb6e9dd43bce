import numpy as np
import pytest

from modules.Cascade.Cascade import (
    CascadeBoundary,
    CascadeConfig,
    boundary_components,
    cascade_pair,
    common_dims,
    component_order,
    reverse_skill,
)
from modules.Gaussian.RiemannianGaussian import RiemannianGaussian
from modules.Manifold.Manifold import Euclid, ManifoldDescriptor, QuaternionFactor
from modules.Mixture.HiddenMarkovModel import HMMModel
from modules.TaskParameterized.TaskParameterizedHMM import fit
from utils.errors import NoCommonDimensionsError, UnsupportedDriverError


def timed_model(label, times, values):
    manifold = ManifoldDescriptor((Euclid(label="time"), Euclid(label=label)))
    components = tuple(
        RiemannianGaussian(manifold, np.array([t, v]), np.diag([0.01, 0.01])) for t, v in zip(times, values)
    )
    K = len(components)
    transitions = np.eye(K) * 0.9 + np.eye(K, k=1) * 0.1
    transitions[-1, -1] = 1.0
    priors = np.zeros(K)
    priors[0] = 1.0
    return HMMModel(manifold, priors, transitions, components)


def test_identical_components_link_with_even_odds():
    g = RiemannianGaussian(ManifoldDescriptor((Euclid(label="x"),)), np.zeros(1), np.eye(1))
    h = HMMModel(g.manifold, [1.0], [[1.0]], (g,))
    boundary = cascade_pair(h, h, CascadeConfig(kl_samples=200))
    assert boundary.kl[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert boundary.intra[0, 0] == pytest.approx(0.5)
    assert boundary.inter[0, 0] == pytest.approx(0.5)


def test_cascade_rows_stay_stochastic():
    h1 = timed_model("x", [0.1, 0.5, 0.9], [0.0, 0.5, 1.0])
    h2 = timed_model("x", [0.1, 0.5, 0.9], [1.0, 1.5, 2.0])
    boundary = cascade_pair(h1, h2, CascadeConfig(kl_samples=500, boundary_fraction=0.3))
    rows = np.hstack([boundary.intra, boundary.inter]).sum(axis=1)
    np.testing.assert_allclose(rows, 1.0)
    # only the tail of h1 links to the head of h2
    assert np.isfinite(boundary.kl).sum() == 1
    assert np.isfinite(boundary.kl[2, 0])
    np.testing.assert_array_equal(boundary.inter[:2], 0.0)
    assert boundary.inter[2, 0] > boundary.inter[2, 1]


def test_full_cascade_links_every_pair():
    h1 = timed_model("x", [0.1, 0.9], [0.0, 1.0])
    h2 = timed_model("x", [0.1, 0.9], [1.0, 2.0])
    boundary = cascade_pair(h1, h2, CascadeConfig(kl_samples=200, full=True))
    assert np.isfinite(boundary.kl).all()
    assert boundary.kl[1, 0] < boundary.kl[0, 1]


def test_models_without_shared_factors():
    with pytest.raises(NoCommonDimensionsError):
        cascade_pair(timed_model("x", [0.5], [0.0]), timed_model("y", [0.5], [0.0]))


def test_common_dims_match_label_and_kind():
    a = ManifoldDescriptor((Euclid(label="time"), Euclid(label="pos", policy="full", n=3), QuaternionFactor(label="rot")))
    b = ManifoldDescriptor((QuaternionFactor(label="rot"), Euclid(label="pos", policy="full", n=3)))
    assert common_dims(a, b) == ([1, 2], [1, 0])


def test_components_are_ordered_by_time():
    h = timed_model("x", [0.7, 0.1, 0.4], [0.0, 0.0, 0.0])
    assert component_order(h) == [1, 2, 0]
    assert boundary_components(h, 0.25, tail=True) == [0]
    assert boundary_components(h, 0.25, tail=False) == [1]


def test_boundary_serialization_keeps_unlinked_pairs():
    boundary = CascadeBoundary(np.eye(2) * 0.5, np.full((2, 2), 0.25), np.array([[np.inf, 0.1], [np.inf, np.inf]]))
    values = boundary.to_dict()
    assert values["kl"][0] == [-1.0, 0.1]
    loaded = CascadeBoundary.from_dict(values)
    assert np.isinf(loaded.kl[1, 1])
    assert loaded.kl[0, 1] == pytest.approx(0.1)


@pytest.fixture(scope="module")
def reach_skill(reach_demos):
    return fit(reach_demos, ["object"], driver="time", K=4, name="reach")


def test_reversal_flips_time(reach_skill):
    back = reverse_skill(reach_skill)
    times = [c.mean[0] for c in reach_skill.model.components]
    np.testing.assert_allclose([c.mean[0] for c in back.model.components], 1.0 - np.array(times))
    np.testing.assert_allclose(back.model.transition_counts, reach_skill.model.transition_counts.T)
    assert back.model.priors[int(np.argmax(times))] == 1.0


def test_reversing_twice_restores_the_skill(reach_skill):
    twice = reverse_skill(reverse_skill(reach_skill))
    np.testing.assert_allclose(twice.model.means(), reach_skill.model.means(), atol=1e-12)
    np.testing.assert_allclose(twice.model.transitions, reach_skill.model.transitions, atol=1e-12)
    np.testing.assert_allclose(twice.model.priors, reach_skill.model.priors)
    for a, b in zip(twice.model.components, reach_skill.model.components):
        np.testing.assert_array_equal(a.cov, b.cov)


@pytest.mark.slow
def test_state_driven_skills_cannot_be_reversed(reach_demos):
    skill = fit(reach_demos, ["object"], driver="state", K=3)
    with pytest.raises(UnsupportedDriverError):
        reverse_skill(skill)
