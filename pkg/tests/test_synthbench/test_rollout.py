from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from modules.Cascade.TaskModel import learn_task_model
from modules.Manifold import Quaternion as quat
from modules.SynthBench.Rollout import (
    GRASP_RADIUS,
    RolloutConfig,
    SyntheticPlant,
    ablation,
    disturbance_start,
    disturbance_study,
    episode_rng,
    evaluate,
    rollout,
)
from modules.SynthBench.Scenario import CLOSED, DOWN, OPEN, builtin_scenario, generate, sample_frames


def pose_at(position):
    return np.concatenate([position, DOWN])


def test_close_near_the_object_attaches():
    obj = np.array([0.5, 0.0, 0.0])
    plant = SyntheticPlant(pose_at(obj + [0.0, 0.0, 0.01]), obj)
    plant.move_to(plant.pose, CLOSED)
    assert plant.attached
    plant.move_by(np.array([0.0, 0.0, 0.1]), quat.IDENTITY, CLOSED)
    np.testing.assert_allclose(plant.object_position, obj + [0.0, 0.0, 0.1])
    plant.move_to(plant.pose, OPEN)
    assert not plant.attached
    plant.move_to(pose_at([0.0, 0.0, 0.5]), OPEN)
    np.testing.assert_allclose(plant.object_position, obj + [0.0, 0.0, 0.1])
    assert plant.steps == 4


def test_close_away_from_the_object_misses():
    obj = np.zeros(3)
    plant = SyntheticPlant(pose_at([0.0, 0.0, 2 * GRASP_RADIUS]), obj)
    plant.move_to(plant.pose, CLOSED)
    assert not plant.attached
    # staying closed while moving onto the object does not grasp it
    plant.move_to(pose_at(obj), CLOSED)
    assert not plant.attached


def test_freeze_holds_the_pose_but_not_the_gripper():
    start = pose_at([0.0, 0.0, 0.3])
    plant = SyntheticPlant(start, np.ones(3), freeze_start=1, freeze_duration=2)
    plant.move_to(pose_at([0.0, 0.0, 0.25]), OPEN)
    plant.move_to(pose_at([0.0, 0.0, 0.2]), CLOSED)
    plant.move_by(np.array([0.0, 0.0, -0.1]), quat.IDENTITY, CLOSED)
    assert plant.frozen_steps == 2
    np.testing.assert_allclose(plant.pose[:3], [0.0, 0.0, 0.25])
    assert plant.gripper == CLOSED
    plant.move_by(np.array([0.0, 0.0, -0.1]), quat.IDENTITY, CLOSED)
    np.testing.assert_allclose(plant.pose[:3], [0.0, 0.0, 0.15])
    assert not plant.frozen


def test_episode_streams_are_independent_of_order():
    a = episode_rng(1, 3).uniform(size=4)
    b = episode_rng(1, 3).uniform(size=4)
    c = episode_rng(1, 4).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_evaluation_needs_episodes():
    with pytest.raises(ValueError):
        evaluate(None, builtin_scenario("lift"), 0)


@pytest.fixture(scope="module")
def lift_spec():
    return builtin_scenario("lift", n_demos=5, seed=2)


@pytest.fixture(scope="module")
def lift_task(lift_spec):
    task, _, _ = learn_task_model(generate(lift_spec), K=5, compute_boundaries=False)
    return task


@pytest.mark.slow
def test_evaluation_summary(lift_spec, lift_task):
    summary = evaluate(lift_task, lift_spec, 3, seed=7, keep_traces=True)
    assert summary["episodes"] == 3
    assert 0.0 <= summary["success_rate"] <= 1.0
    assert len(summary["outcomes"]) == 3
    assert isinstance(summary["traces"], pd.DataFrame)
    assert set(summary["traces"]["episode"]) <= {0, 1, 2}
    again = evaluate(lift_task, lift_spec, 3, seed=7)
    assert [o["steps"] for o in again["outcomes"]] == [o["steps"] for o in summary["outcomes"]]


@pytest.mark.slow
def test_rollout_outcome_on_training_frames(lift_spec, lift_task):
    frames = sample_frames(lift_spec, episode_rng(0, 0))
    outcome = rollout(lift_task, frames, lift_spec)
    assert outcome.steps == len(outcome.trace) or outcome.diagnostic
    record = outcome.to_dict()
    assert set(record) == {"success", "steps", "object_error", "diagnostic", "switches"}
    assert np.isfinite(outcome.object_error) or outcome.diagnostic


@pytest.mark.slow
def test_time_driven_policy_fails_under_mid_grasp_freeze(pick_spec):
    task, _, _ = learn_task_model(generate(pick_spec), driver="time", K=5, compute_boundaries=False)
    config = RolloutConfig(disturbance_start=disturbance_start(task, pick_spec), disturbance_duration=90)
    summary = evaluate(task, pick_spec, 3, config, seed=1)
    assert summary["success_rate"] == 0.0


@pytest.mark.parametrize(
    "error", [np.linalg.LinAlgError("Matrix is not positive definite"), FloatingPointError("overflow encountered")]
)
def test_numerical_failure_is_a_failed_episode(error):
    spec = builtin_scenario("lift")
    frames = sample_frames(spec, episode_rng(0, 0))
    with patch("modules.SynthBench.Rollout.run_sequence", side_effect=error):
        outcome = rollout(None, frames, spec)
    assert not outcome.success
    assert outcome.diagnostic.startswith(type(error).__name__)
    assert outcome.to_dict()["switches"] == []


@pytest.mark.slow
def test_state_driven_policy_succeeds(lift_spec):
    task, _, _ = learn_task_model(generate(lift_spec), driver="state", K=5, compute_boundaries=False)
    summary = evaluate(task, lift_spec, 10, seed=1)
    assert summary["success_rate"] > 0.0


@pytest.mark.slow
def test_time_driven_policy_succeeds(pick_spec):
    task, _, _ = learn_task_model(generate(pick_spec), driver="time", K=5, compute_boundaries=False)
    summary = evaluate(task, pick_spec, 100, seed=1)
    assert summary["success_rate"] >= 0.9
    switches = [o["switches"] for o in summary["outcomes"] if o["success"]]
    assert all(len(s) == 3 for s in switches)


@pytest.mark.slow
def test_ablations_rank_below_the_full_pipeline(pick_spec):
    df = ablation(pick_spec, episodes=200, seed=1, K=5, variants=["full", "no_segmentation", "no_selection"])
    rates = df.set_index("variant")["success_rate"]
    assert rates["full"] - rates["no_segmentation"] >= 0.15
    assert rates["full"] - rates["no_selection"] >= 0.15


@pytest.mark.slow
def test_freeze_hurts_the_time_driven_policy_more(pick_spec):
    df = disturbance_study(pick_spec, episodes=20, seed=1, K=5)
    rate = df.set_index(["variant", "disturbed"])["success_rate"]
    assert rate[("time/factorized/none", False)] > 0.0
    assert rate[("time/factorized/none", True)] == 0.0
    assert rate[("state/factorized/none", False)] > 0.0
    assert rate[("state/factorized/none", True)] >= rate[("time/factorized/none", True)]
