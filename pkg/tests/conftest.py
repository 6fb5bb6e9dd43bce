import numpy as np
import pytest

from modules.Manifold.Manifold import Euclid, ManifoldDescriptor, QuaternionFactor
from modules.Segmentation.SkillSegmentation import segment_and_align
from modules.SynthBench.Scenario import builtin_scenario, generate
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet, FrameInstance
from modules.Manifold import Quaternion as quat
from utils.PipelineClasses import WarningHandler


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def warning_handler():
    return WarningHandler()


@pytest.fixture
def pose_manifold():
    return ManifoldDescriptor((Euclid(label="pos", policy="full", n=3), QuaternionFactor(label="rot")))


@pytest.fixture
def s3():
    return ManifoldDescriptor((QuaternionFactor(label="rot"),))


@pytest.fixture(scope="session")
def pick_spec():
    return builtin_scenario("pick_and_place", n_demos=5, seed=0)


@pytest.fixture(scope="session")
def pick_demos(pick_spec):
    return generate(pick_spec)


@pytest.fixture(scope="session")
def pick_skills(pick_demos):
    return segment_and_align(pick_demos)


def local_reach_demos(n_demos=5, T=60, seed=0):
    """
    Demonstrations that follow one fixed path in a randomly placed "object"
    frame: a straight minimum-jerk descent from 20 cm above its origin.
    """
    rng = np.random.default_rng(seed)
    tau = np.arange(T) / (T - 1)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    local = np.stack([0.05 * s, np.zeros(T), 0.2 * (1.0 - s)], axis=1)
    local_rot = np.tile([0.0, 1.0, 0.0, 0.0], (T, 1))
    demos = []
    for _ in range(n_demos):
        frame = FrameInstance(
            quat.from_axis_angle([0.0, 0.0, 1.0], rng.uniform(-np.pi / 3, np.pi / 3)),
            rng.uniform([0.3, -0.3, 0.0], [0.6, 0.3, 0.1]),
            "object",
        )
        poses = np.hstack([frame.to_world(local), quat.make_continuous(quat.qmul(frame.rotation, local_rot))])
        gripper = np.where(tau < 0.8, 0.08, 0.0)
        demos.append(Demonstration(tau * T * 0.05, poses, gripper, {"object": frame, "world": FrameInstance.identity()}))
    return DemonstrationSet(0.05, demos)


@pytest.fixture(scope="session")
def reach_demos():
    return local_reach_demos()
