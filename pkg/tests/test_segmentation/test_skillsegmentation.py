import numpy as np
import pytest

from modules.Manifold import Quaternion as quat
from modules.Segmentation.SkillSegmentation import (
    SegmentationConfig,
    find_cuts,
    magnitudes_frame,
    resample_demo,
    segment_and_align,
)
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet, FrameInstance
from utils.errors import InconsistentSegmentationError, ManifoldArgumentError


def paused_demo(pauses, T=160, step=0.01):
    increments = np.full(T - 1, step)
    for s, e in pauses:
        increments[s : e + 1] = 0.0
    x = np.concatenate([[0.0], np.cumsum(increments)])
    poses = np.hstack([np.stack([x, np.zeros(T), np.zeros(T)], axis=1), np.tile(quat.IDENTITY, (T, 1))])
    return Demonstration(np.arange(T) * 0.05, poses, np.zeros(T), {"world": FrameInstance.identity()})


def test_cuts_at_pause_centers():
    assert find_cuts(paused_demo([(40, 58), (100, 118)])) == [49, 109]


def test_short_pauses_and_margins_are_ignored():
    demo = paused_demo([(3, 8), (60, 62), (100, 118)])
    assert find_cuts(demo) == [109]


def test_expected_skills_keeps_longest_pauses():
    demo = paused_demo([(30, 36), (60, 80), (110, 124)])
    assert find_cuts(demo, SegmentationConfig(expected_skills=3)) == [70, 117]
    assert find_cuts(demo, SegmentationConfig(expected_skills=2)) == [70]


def test_too_short_demo():
    with pytest.raises(ManifoldArgumentError):
        find_cuts(paused_demo([], T=20))


def test_inconsistent_cut_counts():
    demos = DemonstrationSet(0.05, [paused_demo([(40, 58)]), paused_demo([(40, 58), (100, 118)])])
    with pytest.raises(InconsistentSegmentationError) as e:
        segment_and_align(demos)
    assert e.value.cut_counts == [1, 2]


def test_skills_share_the_cut_sample():
    demos = DemonstrationSet(0.05, [paused_demo([(40, 58), (100, 118)]), paused_demo([(44, 62), (100, 118)])])
    result, skills = segment_and_align(demos)
    assert result.skill_count == 3
    assert result.cuts == [[49, 109], [53, 109]]
    assert result.durations == [52, 59, 51]
    for n, demo in enumerate(demos):
        cut = result.cuts[n][0]
        np.testing.assert_allclose(skills[0][n].poses[-1], demo.poses[cut])
        np.testing.assert_allclose(skills[1][n].poses[0], demo.poses[cut])
    assert all(len(d) == 59 for d in skills[1])
    assert skills[1].metadata["skill"] == 1


def test_disabled_segmentation_keeps_whole_demos():
    demos = DemonstrationSet(0.05, [paused_demo([(40, 58)]), paused_demo([(40, 58)], T=170)])
    result, skills = segment_and_align(demos, SegmentationConfig(enabled=False))
    assert result.skill_count == 1
    assert result.durations == [165]
    np.testing.assert_allclose(skills[0][1].poses[-1], demos[1].poses[-1])


def test_resampling_reproduces_endpoints():
    demo = paused_demo([])
    resampled = resample_demo(demo, 10, 50, 17)
    assert len(resampled) == 17
    np.testing.assert_array_equal(resampled.poses[0], demo.poses[10])
    np.testing.assert_allclose(resampled.poses[-1], demo.poses[50])
    with pytest.raises(ManifoldArgumentError):
        resample_demo(demo, 10, 10, 5)


def test_magnitudes_frame_marks_cuts():
    demos = DemonstrationSet(0.05, [paused_demo([(40, 58), (100, 118)])])
    result, _ = segment_and_align(demos)
    df = magnitudes_frame(demos, result)
    assert list(df.columns) == ["demo", "t", "lin_mag", "ang_mag", "is_cut"]
    assert df.loc[df.is_cut, "t"].tolist() == [49, 109]


def test_generated_demos_split_into_planned_skills(pick_demos, pick_skills):
    result, skills = pick_skills
    assert all(len(c) == 3 for c in result.cuts)
    assert len(skills) == 4
