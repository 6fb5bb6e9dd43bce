"""
Task frames and demonstrations.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from modules.Manifold import Quaternion as quat
from utils.errors import ManifoldArgumentError, MissingFrameError

UNIT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class FrameInstance:
    """
    A rigid task frame: unit quaternion ``rotation`` (w, x, y, z), ``origin`` in meters.

    Example:
        >>> frame = FrameInstance([1, 0, 0, 0], [0, 0, 5], "object")
        >>> frame.to_world([1, 0, 0])
        array([1., 0., 5.])
    """

    rotation: np.ndarray
    origin: np.ndarray
    id: str = "world"

    def __post_init__(self):
        rotation = quat.check_unit(np.asarray(self.rotation, dtype=float), tol=1e-6, what=f"frame '{self.id}' rotation")
        if abs(np.linalg.norm(rotation) - 1.0) > UNIT_TOLERANCE:
            rotation = quat.normalize(rotation)
        origin = np.asarray(self.origin, dtype=float)
        if origin.shape != (3,):
            raise ManifoldArgumentError(f"frame '{self.id}' origin must have 3 coordinates, got {origin.shape}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def identity(cls, id: str = "world") -> "FrameInstance":
        return cls(quat.IDENTITY.copy(), np.zeros(3), id)

    @property
    def matrix(self) -> np.ndarray:
        return quat.to_matrix(self.rotation)

    def inverse(self) -> "FrameInstance":
        inv = quat.qconj(self.rotation)
        return FrameInstance(inv, -quat.rotate(inv, self.origin), self.id)

    def compose(self, other: "FrameInstance") -> "FrameInstance":
        """Frame ``self ∘ other``: apply ``other`` first."""
        return FrameInstance(
            quat.normalize(quat.qmul(self.rotation, other.rotation)),
            self.to_world(other.origin),
            other.id,
        )

    def to_world(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.matrix.T + self.origin

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.origin) @ self.matrix

    def rotation_to_local(self, quaternions) -> np.ndarray:
        return quat.qmul(quat.qconj(self.rotation), quaternions)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "origin": self.origin.tolist()}


@dataclass(eq=False)
class Demonstration:
    """
    One timed end-effector trajectory with its static candidate frames.

    ``poses`` rows are (x, y, z, qw, qx, qy, qz).
    """

    time: np.ndarray
    poses: np.ndarray
    gripper: np.ndarray
    frames: Dict[str, FrameInstance] = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.poses = np.asarray(self.poses, dtype=float)
        self.gripper = np.asarray(self.gripper, dtype=float)

    def __len__(self):
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :3]

    @property
    def quaternions(self) -> np.ndarray:
        return self.poses[:, 3:]

    def frame(self, frame_id: str, demo_index: Optional[int] = None) -> FrameInstance:
        if frame_id not in self.frames:
            where = "" if demo_index is None else f"demo {demo_index} "
            raise MissingFrameError(
                f"{where}has no instance of frame '{frame_id}' (available: {sorted(self.frames)})",
                demo_index=demo_index,
                frame_id=frame_id,
            )
        return self.frames[frame_id]

    def slice(self, start: int, stop: int) -> "Demonstration":
        return Demonstration(self.time[start:stop], self.poses[start:stop], self.gripper[start:stop], dict(self.frames))


@dataclass(eq=False)
class DemonstrationSet:
    dt: float
    demos: List[Demonstration]
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)

    def __getitem__(self, index):
        return self.demos[index]

    def frame_ids(self) -> List[str]:
        """Frame ids present in every demonstration, sorted."""
        if not self.demos:
            return []
        common = set(self.demos[0].frames)
        for demo in self.demos[1:]:
            common &= set(demo.frames)
        return sorted(common)

    def frames_of(self, index: int, frame_ids: Sequence[str]) -> Dict[str, FrameInstance]:
        demo = self.demos[index]
        return {f: demo.frame(f, index) for f in frame_ids}
