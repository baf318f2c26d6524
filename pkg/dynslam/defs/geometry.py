"""Rigid transforms and trajectories.

Quaternions are stored scalar-last, ``(qx, qy, qz, qw)``, the TUM and scipy order.
"""
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.spatial.transform import Rotation


def skew(v: np.ndarray) -> np.ndarray:
    """cross-product matrix [v]x, stacked over leading axes

    >>> skew(np.array([1.0, 2.0, 3.0])) @ np.array([0.0, 0.0, 1.0])
    array([ 2., -1.,  0.])
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def quaternion_angle(quaternion: np.ndarray) -> np.ndarray:
    """rotation angle in radians of (..., 4) scalar-last quaternions, stable near identity"""
    q = np.asarray(quaternion, dtype=np.float64)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., :3], axis=-1), np.abs(q[..., 3]))


@dataclass(frozen=True, eq=False)
class Se3Pose:
    """rotation (unit quaternion) plus translation in meters, acting as x -> R x + t"""
    quaternion: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError(f"quaternion {q} cannot be normalized")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError(f"translation {t} is not finite")
        object.__setattr__(self, "quaternion", q / norm)
        object.__setattr__(self, "translation", t.copy())

    @classmethod
    def identity(cls) -> "Se3Pose":
        return cls()

    @classmethod
    def from_rt(cls, rotation: np.ndarray | Rotation, translation: Iterable[float]) -> "Se3Pose":
        if not isinstance(rotation, Rotation):
            rotation = Rotation.from_matrix(np.asarray(rotation, dtype=np.float64))
        return cls(rotation.as_quat(), np.asarray(translation, dtype=np.float64))

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.translation
        return out

    def __matmul__(self, other: "Se3Pose") -> "Se3Pose":
        rotation = self.rotation
        return Se3Pose((rotation * other.rotation).as_quat(),
                       rotation.apply(other.translation) + self.translation)

    def inverse(self) -> "Se3Pose":
        inv = self.rotation.inv()
        return Se3Pose(inv.as_quat(), -inv.apply(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """transform (N, 3) or (3,) points"""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation_matrix.T + self.translation

    def perturb(self, delta: np.ndarray) -> "Se3Pose":
        """left update by delta = (rho, phi): x -> exp(phi) (R x + t) + rho"""
        delta = np.asarray(delta, dtype=np.float64)
        step = Rotation.from_rotvec(delta[3:6])
        return Se3Pose((step * self.rotation).as_quat(),
                       step.apply(self.translation) + delta[:3])

    @property
    def angle(self) -> float:
        """rotation angle in radians"""
        return float(quaternion_angle(self.quaternion))

    def __repr__(self) -> str:
        q = ", ".join(f"{v:.6g}" for v in self.quaternion)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"Se3Pose(q=[{q}], t=[{t}])"


@dataclass(eq=False)
class Trajectory:
    """time-ordered camera-to-world poses"""
    timestamps: np.ndarray
    translations: np.ndarray
    quaternions: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        self.translations = np.asarray(self.translations, dtype=np.float64).reshape(-1, 3)
        quaternions = np.asarray(self.quaternions, dtype=np.float64).reshape(-1, 4)
        n = len(self.timestamps)
        if len(self.translations) != n or len(quaternions) != n:
            raise ValueError("timestamps, translations and quaternions differ in length")
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        norms = np.linalg.norm(quaternions, axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise ValueError("trajectory holds a zero or non-finite quaternion")
        self.quaternions = quaternions / norms[:, None]

    @classmethod
    def from_poses(cls, timestamps: Iterable[float], poses: Iterable[Se3Pose]) -> "Trajectory":
        poses = list(poses)
        return cls(np.asarray(list(timestamps), dtype=np.float64),
                   np.array([p.translation for p in poses]).reshape(-1, 3),
                   np.array([p.quaternion for p in poses]).reshape(-1, 4))

    def __len__(self) -> int:
        return len(self.timestamps)

    def pose(self, index: int) -> Se3Pose:
        return Se3Pose(self.quaternions[index], self.translations[index])

    def poses(self) -> list[Se3Pose]:
        return [self.pose(i) for i in range(len(self))]

    @property
    def positions(self) -> np.ndarray:
        return self.translations

    def transformed(self, transform: Se3Pose) -> "Trajectory":
        """every pose left-multiplied by `transform`"""
        return Trajectory.from_poses(self.timestamps, [transform @ p for p in self.poses()])
