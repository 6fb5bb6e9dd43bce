"""
Command line interface of the pipeline.

Every command reads and writes files, so the stages compose:
``synth -> segment -> select -> fit -> predict | rollout | eval -> export-plots``.
"""

import argparse
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import List, Optional

import numpy as np
import pandas as pd

from modules.Cascade.Cascade import CascadeConfig
from modules.Cascade.TaskModel import TaskModel, learn_task_model, select_task_frames, velocity_command
from modules.DataLoading.DataIngestion import (
    create_warning_handler,
    load_dataset,
    load_model,
    read_json,
    save_dataset,
    save_model,
    write_csv,
    write_json,
)
from modules.Gaussian.RiemannianGaussian import RegularizationConfig
from modules.Mixture.HiddenMarkovModel import EMConfig
from modules.Segmentation.SkillSegmentation import SegmentationConfig, magnitudes_frame, segment_and_align
from modules.Selection.FrameSelection import SelectionConfig
from modules.SynthBench.Rollout import RolloutConfig, episode_rng, evaluate, rollout
from modules.SynthBench.Scenario import ScenarioSpec, builtin_scenario, generate, sample_frames, sample_start
from modules.TaskParameterized.TaskParameterizedHMM import adapt, new_state, predict, reconstruct
from utils import globals as defaults
from utils import strings
from utils.PipelineClasses import CommandReport
from utils.errors import DatasetSchemaError, TapasError

COMMANDS = ["synth", "segment", "select", "fit", "predict", "rollout", "eval", "export-plots"]


class UsageError(TapasError):
    pass


""" Argument parsing """


def _add_segmentation_flags(p):
    p.add_argument("--vel-threshold", dest="vel_threshold", type=float, help="Pause threshold on the action magnitude")
    p.add_argument("--min-pause-len", dest="min_pause_len", type=int, help="Shortest pause, in steps")
    p.add_argument("--boundary-margin", dest="boundary_margin", type=int, help="Steps ignored at both demo ends")
    p.add_argument("--expected-skills", dest="expected_skills", type=int, help="Skills per demonstration, if known")
    p.add_argument("--alpha", type=float, help="Weight of the angular magnitude (m/rad)")
    p.add_argument(
        "--no-segmentation", dest="enabled", action="store_const", const=False, help="Treat every demo as one skill"
    )


def _add_selection_flags(p):
    p.add_argument("--tau", type=float, help="Relevance threshold in (0, 1)")
    p.add_argument("--selection", dest="mode", choices=["per_skill", "global", "none"], help="Frame selection mode")
    p.add_argument("--candidates", nargs="+", help="Candidate frame ids (default: every common frame)")


def _add_model_flags(p):
    p.add_argument("--k", dest="K", type=int, help="Components per skill")
    p.add_argument("--driver", choices=["time", "state"], help="Input of the skill models")
    p.add_argument("--velocity", choices=["factorized", "naive"], help="Velocity layout of state-driven models")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="EM iteration limit")
    p.add_argument("--kl-samples", dest="kl_samples", type=int, help="Monte-Carlo samples per KL estimate")


def _add_regularization_flags(p):
    p.add_argument(
        "--regularization", dest="policy", choices=defaults.REGULARIZATION_POLICIES,
        help="Covariance repair after frame transforms (time-driven skills)",
    )
    p.add_argument(
        "--state-regularization", dest="state_policy", choices=defaults.REGULARIZATION_POLICIES,
        help="Covariance repair after frame transforms (state-driven skills)",
    )
    p.add_argument("--epsilon", type=float, help="Covariance floor")


def _add_controller_flags(p):
    p.add_argument("--scenario", help="Built-in scenario (pick_and_place or lift)")
    p.add_argument("--post-processing", dest="post_processing", choices=["none", "threshold", "clamp"])
    p.add_argument("--delta", type=float, help="Thresholding distance (m)")
    p.add_argument("--v-max", dest="v_max", type=float, help="Clamp on the translation per step (m)")
    p.add_argument("--max-steps", dest="max_steps", type=int, help="Step budget")
    p.add_argument("--disturbance-start", dest="disturbance_start", type=int, help="Freeze the end effector at this step")
    p.add_argument("--disturbance-duration", dest="disturbance_duration", type=int, help="Freeze length (steps)")
    p.add_argument("--tolerance", type=float, help="Success distance to the goal (m)")
    _add_regularization_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tapas",
        description=strings.CLI_DESCRIPTION,
        epilog=strings.CLI_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML file with settings")
    common.add_argument("--seed", type=int, help="Seed (falls back to $%s)" % defaults.SEED_ENV_VAR)
    common.add_argument("--out", default=".", help="Output directory")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", parents=[common], help=strings.SYNTH_HELP)
    p.add_argument("--scenario", help="Built-in scenario (pick_and_place or lift)")
    p.add_argument("--demos", dest="n_demos", type=int, help="Number of demonstrations")
    p.add_argument("--sigma-pos", dest="sigma_pos", type=float, help="Waypoint position noise (m)")
    p.add_argument("--sigma-rot", dest="sigma_rot", type=float, help="Waypoint orientation noise (rad)")
    p.add_argument("--pause-len", dest="pause_len", type=int, help="Pause between skills (steps)")

    p = sub.add_parser("segment", parents=[common], help=strings.SEGMENT_HELP)
    p.add_argument("--dataset", required=True)
    _add_segmentation_flags(p)

    p = sub.add_parser("select", parents=[common], help=strings.SELECT_HELP)
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", dest="K", type=int, help="Components of the scoring models")
    _add_segmentation_flags(p)
    _add_selection_flags(p)

    p = sub.add_parser("fit", parents=[common], help=strings.FIT_HELP)
    p.add_argument("--dataset", required=True)
    _add_segmentation_flags(p)
    _add_selection_flags(p)
    _add_model_flags(p)

    p = sub.add_parser("predict", parents=[common], help=strings.PREDICT_HELP)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--demo", type=int, help="Demonstration whose frames (and poses) are used")
    p.add_argument("--steps", type=int, help="Regression steps per time-driven skill (default: its mean length)")
    _add_regularization_flags(p)

    p = sub.add_parser("rollout", parents=[common], help=strings.ROLLOUT_HELP)
    p.add_argument("--model", required=True)
    p.add_argument("--episode", type=int, help="Episode index of the frame draw (default 0)")
    _add_controller_flags(p)

    p = sub.add_parser("eval", parents=[common], help=strings.EVAL_HELP)
    p.add_argument("--model", required=True)
    p.add_argument("--episodes", type=int, help="Number of episodes (default 100)")
    _add_controller_flags(p)

    p = sub.add_parser("export-plots", parents=[common], help=strings.EXPORT_PLOTS_HELP)
    p.add_argument("--magnitudes", help="magnitudes.csv from segment")
    p.add_argument("--relevance", help="relevance.json from select")
    p.add_argument("--traces", help="traces.csv from rollout or eval")
    return parser


""" Settings """


def read_config_file(path: Optional[str], command: str) -> dict:
    """
    Settings of ``command`` from a JSON or TOML file.

    Top-level values apply to every command; a table named after the
    command overrides them.
    """
    if not path:
        return {}
    if path.endswith(".toml"):
        with open(path, "rb") as f:
            values = tomllib.load(f)
    else:
        values = read_json(path)
    if not isinstance(values, dict):
        raise DatasetSchemaError("a config file must hold a table of settings")
    settings = {k: v for k, v in values.items() if k not in COMMANDS}
    settings.update(values.get(command, {}))
    return settings


def effective_settings(args: argparse.Namespace) -> dict:
    """Flags over config file over built-in defaults."""
    settings = read_config_file(args.config, args.command)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command", "out")}
    settings.update(flags)
    if "seed" not in settings:
        settings["seed"] = int(os.environ.get(defaults.SEED_ENV_VAR, 0))
    return settings


def scenario_from(settings: dict) -> ScenarioSpec:
    overrides = {k: v for k, v in settings.items() if k in ScenarioSpec.param and k not in ("name", "seed")}
    return builtin_scenario(settings.get("scenario", "pick_and_place"), **overrides)


""" Commands """


def _document(values: dict, settings: dict, handler) -> dict:
    return dict(values, config=settings, warnings=handler.records())


def run_synth(args, settings, handler, report):
    spec = scenario_from(settings).updated(seed=settings["seed"])
    demos = generate(spec)
    path = os.path.join(args.out, "dataset.json")
    save_dataset(demos, path)
    report.add_output(f"Wrote {len(demos)} demonstrations of '{spec.name}' to {path}")


def _segment(settings):
    demos = load_dataset(settings["dataset"])
    segmentation = SegmentationConfig.from_dict(settings)
    result, skill_sets = segment_and_align(demos, segmentation)
    return demos, segmentation, result, skill_sets


def run_segment(args, settings, handler, report):
    demos, segmentation, result, _ = _segment(settings)
    write_csv(os.path.join(args.out, "magnitudes.csv"), magnitudes_frame(demos, result, segmentation.alpha))
    write_json(os.path.join(args.out, "cuts.json"), _document(result.to_dict(), settings, handler))
    report.add_output(f"Found {result.skill_count} skills with durations {result.durations}")


def run_select(args, settings, handler, report):
    demos, _, result, skill_sets = _segment(settings)
    selection = SelectionConfig.from_dict(settings)
    candidates = settings.get("candidates") or demos.frame_ids()
    reports, chosen = select_task_frames(demos, skill_sets, candidates, selection)
    shares = [r.shares_frame() for r in reports]
    if shares:
        write_csv(os.path.join(args.out, "relevance.csv"), pd.concat(shares, ignore_index=True))
    document = {"skills": [r.to_dict() for r in reports], "selected": chosen, "segmentation": result.to_dict()}
    write_json(os.path.join(args.out, "relevance.json"), _document(document, settings, handler))
    for s, frames in enumerate(chosen):
        report.add_output(f"skill {s}: {', '.join(frames)}")


def run_fit(args, settings, handler, report):
    demos = load_dataset(settings["dataset"])
    task, result, _ = learn_task_model(
        demos,
        driver=settings.get("driver", "time"),
        velocity=settings.get("velocity", "factorized"),
        K=settings.get("K", defaults.DEFAULT_K),
        segmentation=SegmentationConfig.from_dict(settings),
        selection=SelectionConfig.from_dict(settings),
        em=EMConfig.from_dict(settings),
        cascade=CascadeConfig.from_dict(settings),
        candidates=settings.get("candidates"),
    )
    task.config.update(provenance=settings, warnings=handler.records())
    path = os.path.join(args.out, "task_model.json")
    save_model(task, path)
    for skill in task.skills:
        report.add_output(f"{skill.name}: frames {', '.join(skill.selected_frames)}, T={skill.T_bar}")
    report.add_output(f"Wrote {path}")


def _load_task(path: str) -> TaskModel:
    model = load_model(path)
    if isinstance(model, TaskModel):
        return model
    if hasattr(model, "selected_frames"):
        return TaskModel((model,))
    raise UsageError(f"{path} holds an HMM, expected a task or skill model")


def run_predict(args, settings, handler, report):
    task = _load_task(settings["model"])
    demos = load_dataset(settings["dataset"])
    frames = demos.frames_of(settings.get("demo", 0), task.frame_ids)
    regularization = RegularizationConfig.from_dict(settings)
    rows = []
    for s, skill in enumerate(task.skills):
        adapted = adapt(skill, frames, regularization)
        if skill.driver == "time":
            out = reconstruct(adapted, settings.get("steps", skill.T_bar))
            columns = ["x", "y", "z", "qw", "qx", "qy", "qz", "gripper"]
        else:
            state = new_state(adapted, skill.driver)
            out = []
            for pose in demos[settings.get("demo", 0)].poses:
                x_dot, dq, gripper = velocity_command(predict(adapted, state, pose), skill.velocity)
                out.append([*x_dot, *dq, gripper])
            columns = ["vx", "vy", "vz", "dqw", "dqx", "dqy", "dqz", "gripper"]
        df = pd.DataFrame(np.asarray(out), columns=columns)
        df.insert(0, "step", np.arange(len(df)))
        df.insert(0, "skill", s)
        rows.append(df)
    predictions = pd.concat(rows, ignore_index=True)
    write_csv(os.path.join(args.out, "predictions.csv"), predictions)
    write_json(os.path.join(args.out, "predict.json"), _document({"rows": len(predictions)}, settings, handler))
    report.add_output(f"Predicted {len(predictions)} steps for {len(task.skills)} skills")


def run_rollout(args, settings, handler, report):
    task = _load_task(settings["model"])
    spec = scenario_from(settings)
    rng = episode_rng(settings["seed"], settings.get("episode", 0))
    frames = sample_frames(spec, rng)
    outcome = rollout(
        task, frames, spec, RolloutConfig.from_dict(settings), sample_start(spec, rng),
        RegularizationConfig.from_dict(settings),
    )
    write_csv(os.path.join(args.out, "traces.csv"), outcome.trace.frame())
    write_json(os.path.join(args.out, "summary.json"), _document(outcome.to_dict(), settings, handler))
    report.add_output(f"{'success' if outcome.success else 'failure'} after {outcome.steps} steps")


def run_eval(args, settings, handler, report):
    task = _load_task(settings["model"])
    spec = scenario_from(settings)
    summary = evaluate(
        task, spec, settings.get("episodes", 100), RolloutConfig.from_dict(settings), settings["seed"],
        RegularizationConfig.from_dict(settings), keep_traces=True,
    )
    write_csv(os.path.join(args.out, "traces.csv"), summary.pop("traces"))
    write_json(os.path.join(args.out, "summary.json"), _document(summary, settings, handler))
    report.add_output(f"success rate {summary['success_rate']:.3f} over {summary['episodes']} episodes")


def run_export_plots(args, settings, handler, report):
    # holoviews is only imported when plots are requested
    from modules.QuickLook.Magnitudes import export_magnitudes_plot
    from modules.QuickLook.Relevance import export_relevance_plot
    from modules.QuickLook.RolloutTraces import export_trace_plot

    if not (args.magnitudes or args.relevance or args.traces):
        raise UsageError("export-plots needs at least one of --magnitudes, --relevance or --traces")
    if args.magnitudes:
        export_magnitudes_plot(pd.read_csv(args.magnitudes), os.path.join(args.out, "magnitudes.html"))
        report.add_output("Wrote magnitudes.html")
    if args.relevance:
        export_relevance_plot(read_json(args.relevance)["skills"], os.path.join(args.out, "relevance.html"))
        report.add_output("Wrote relevance.html")
    if args.traces:
        export_trace_plot(pd.read_csv(args.traces), os.path.join(args.out, "traces.html"))
        report.add_output("Wrote traces.html")


HANDLERS = {
    "synth": run_synth,
    "segment": run_segment,
    "select": run_select,
    "fit": run_fit,
    "predict": run_predict,
    "rollout": run_rollout,
    "eval": run_eval,
    "export-plots": run_export_plots,
}


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Run one command and return its exit status.

    Returns:
        int: 0 on success, 1 when the command failed, 2 on a usage error.

    Side effects:
        Writes the command's files below ``--out``; prints the report to
        stdout and captured warnings and errors to stderr.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    handler = create_warning_handler()
    report = CommandReport()
    try:
        settings = effective_settings(args)
        HANDLERS[args.command](args, settings, handler, report)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{strings.ERROR_PREFIX}: {e}", file=sys.stderr)
        return 2
    except (TapasError, OSError, ValueError, KeyError, tomllib.TOMLDecodeError) as e:
        report.warning_content = handler.warnings
        report.emit()
        print(f"{strings.ERROR_PREFIX}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    report.warning_content = handler.warnings
    report.emit()
    return 0


if __name__ == "__main__":
    sys.exit(run_command())
