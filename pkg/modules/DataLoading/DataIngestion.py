# Standard Imports
import json
import os
import tempfile
import warnings
from typing import Any, Callable

import numpy as np
import pandas as pd

# Pipeline Imports
from modules.Cascade.TaskModel import TaskModel
from modules.Manifold import Quaternion as quat
from modules.Mixture.HiddenMarkovModel import HMMModel
from modules.TaskParameterized.Frames import Demonstration, DemonstrationSet, FrameInstance
from modules.TaskParameterized.TaskParameterizedHMM import SkillModel
from utils import globals as defaults
from utils.PipelineClasses import WarningHandler
from utils.errors import DatasetSchemaError, RenormalizationWarning

# Quaternions further than this from unit norm are rejected on load
LOAD_UNIT_TOLERANCE = 1e-6
RENORMALIZE_TOLERANCE = 1e-9

MODEL_LOADERS = {
    defaults.SCHEMA_TASK: TaskModel.from_dict,
    defaults.SCHEMA_SKILL: SkillModel.from_dict,
    defaults.SCHEMA_HMM: HMMModel.from_dict,
}


def create_warning_handler():
    """
    Create an instance of WarningHandler and redirect warnings to this custom handler.

    Returns:
        WarningHandler: An instance of WarningHandler to handle warnings.

    Side effects:
        Overrides the default warning handler with a custom one and makes
        every warning visible (repeated warnings are not collapsed).

    Example:
        >>> warning_handler = create_warning_handler()
        >>> warning_handler.warn("Test warning", category=RuntimeWarning)
    """
    warning_handler = WarningHandler()
    warnings.simplefilter("always")
    warnings.showwarning = warning_handler.warn
    return warning_handler


""" Writers """


def atomic_write(path: str, write: Callable[[Any], None], mode: str = "w") -> None:
    """
    Write a file through a temporary sibling and an atomic rename.

    Args:
        path (str): Destination file.
        write (callable): Receives the open temporary file and fills it.
        mode (str): File mode of the temporary file.

    Side effects:
        Creates the destination directory if needed. On failure the
        destination is left untouched and the temporary file is removed.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{os.path.basename(path)}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def dumps(values: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent."""
    return json.dumps(values, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str, values: Any) -> None:
    text = dumps(values)
    atomic_write(path, lambda f: f.write(text))


def write_csv(path: str, df: pd.DataFrame) -> None:
    atomic_write(path, lambda f: df.to_csv(f, index=False))


def read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetSchemaError(f"not valid JSON ({e.msg} at line {e.lineno})") from e


""" Datasets """


def dataset_to_dict(demos: DemonstrationSet) -> dict:
    return {
        "schema": defaults.SCHEMA_DATASET,
        "dt": float(demos.dt),
        "metadata": demos.metadata,
        "demos": [
            {
                "time": demo.time.tolist(),
                "poses": demo.poses.tolist(),
                "gripper": demo.gripper.tolist(),
                "frames": {k: f.to_dict() for k, f in demo.frames.items()},
            }
            for demo in demos
        ],
    }


def save_dataset(demos: DemonstrationSet, path: str) -> None:
    write_json(path, dataset_to_dict(demos))


def _array(values, pointer: str, shape_tail=()) -> np.ndarray:
    try:
        array = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise DatasetSchemaError("expected an array of numbers", pointer) from e
    if array.ndim != 1 + len(shape_tail) or array.shape[1:] != tuple(shape_tail):
        expected = "N" + "".join(f"x{n}" for n in shape_tail)
        raise DatasetSchemaError(f"expected shape {expected}, got {array.shape}", pointer)
    if not np.all(np.isfinite(array)):
        raise DatasetSchemaError("contains non-finite values", pointer)
    return array


def _unit_quaternions(q: np.ndarray, pointer: str, row_pointer: Callable[[int], str]) -> np.ndarray:
    deviation = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    worst = int(np.argmax(deviation))
    if deviation[worst] > LOAD_UNIT_TOLERANCE:
        raise DatasetSchemaError(
            f"quaternion norm {np.linalg.norm(q[worst]):.6g} is not unit", row_pointer(worst)
        )
    if deviation[worst] > RENORMALIZE_TOLERANCE:
        warnings.warn(f"{pointer}: quaternions renormalized (max deviation {deviation[worst]:.3g})", RenormalizationWarning)
        q = quat.normalize(q)
    return q


def _frame_from_dict(values, frame_id: str, pointer: str) -> FrameInstance:
    if not isinstance(values, dict) or "rotation" not in values or "origin" not in values:
        raise DatasetSchemaError("a frame needs 'rotation' and 'origin'", pointer)
    rotation = _array(values["rotation"], f"{pointer}/rotation")
    if rotation.shape != (4,):
        raise DatasetSchemaError(f"expected 4 numbers, got {len(rotation)}", f"{pointer}/rotation")
    rotation = _unit_quaternions(rotation[None, :], pointer, lambda _: f"{pointer}/rotation")[0]
    origin = _array(values["origin"], f"{pointer}/origin")
    if origin.shape != (3,):
        raise DatasetSchemaError(f"expected 3 numbers, got {len(origin)}", f"{pointer}/origin")
    return FrameInstance(rotation, origin, frame_id)


def _demo_from_dict(values, index: int) -> Demonstration:
    pointer = f"/demos/{index}"
    if not isinstance(values, dict):
        raise DatasetSchemaError("a demo must be an object", pointer)
    for key in ("time", "poses", "gripper", "frames"):
        if key not in values:
            raise DatasetSchemaError(f"missing '{key}'", f"{pointer}/{key}")
    time = _array(values["time"], f"{pointer}/time")
    poses = _array(values["poses"], f"{pointer}/poses", (7,))
    gripper = _array(values["gripper"], f"{pointer}/gripper")
    lengths = {"time": len(time), "poses": len(poses), "gripper": len(gripper)}
    if len(set(lengths.values())) != 1:
        raise DatasetSchemaError(f"demo {index} has arrays of different lengths {lengths}", pointer)
    if len(time) < 2:
        raise DatasetSchemaError(f"demo {index} needs at least two samples", f"{pointer}/time")
    q = _unit_quaternions(poses[:, 3:], f"{pointer}/poses", lambda j: f"{pointer}/poses/{j}")
    poses = np.hstack([poses[:, :3], quat.make_continuous(q)])
    if not isinstance(values["frames"], dict):
        raise DatasetSchemaError("frames must be an object keyed by frame id", f"{pointer}/frames")
    frames = {
        k: _frame_from_dict(v, k, f"{pointer}/frames/{k}") for k, v in sorted(values["frames"].items())
    }
    return Demonstration(time, poses, gripper, frames)


def dataset_from_dict(values: dict) -> DemonstrationSet:
    """
    Validate a dataset document and build the demonstration set.

    Exceptions:
        DatasetSchemaError: Any violation, with a JSON pointer to the offending field.

    Side effects:
        Emits a ``RenormalizationWarning`` for quaternions that are unit only
        within the load tolerance.
    """
    if not isinstance(values, dict):
        raise DatasetSchemaError("a dataset must be a JSON object")
    if values.get("schema") != defaults.SCHEMA_DATASET:
        raise DatasetSchemaError(f"expected schema '{defaults.SCHEMA_DATASET}', got '{values.get('schema')}'", "/schema")
    try:
        dt = float(values["dt"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetSchemaError("missing or non-numeric 'dt'", "/dt") from e
    if not dt > 0:
        raise DatasetSchemaError(f"dt must be positive, got {dt}", "/dt")
    demos = values.get("demos")
    if not isinstance(demos, list) or not demos:
        raise DatasetSchemaError("expected a non-empty list of demos", "/demos")
    return DemonstrationSet(dt, [_demo_from_dict(d, i) for i, d in enumerate(demos)], dict(values.get("metadata", {})))


def load_dataset(path: str) -> DemonstrationSet:
    """
    Read a dataset file.

    Args:
        path (str): JSON dataset following the ``tapas.dataset/1`` schema.

    Returns:
        DemonstrationSet: Demonstrations with sign-continuous quaternion trajectories.

    Example:
        >>> demos = load_dataset("dataset.json")
        >>> demos.frame_ids()
        ['object', 'target', 'world']
    """
    return dataset_from_dict(read_json(path))


""" Models """


def save_model(model, path: str) -> None:
    write_json(path, model.to_dict())


def load_model(path: str):
    """
    Read a task, skill or HMM model, chosen by the file's schema tag.
    """
    values = read_json(path)
    schema = values.get("schema") if isinstance(values, dict) else None
    if schema not in MODEL_LOADERS:
        raise DatasetSchemaError(f"unknown model schema '{schema}', expected one of {sorted(MODEL_LOADERS)}", "/schema")
    return MODEL_LOADERS[schema](values)
