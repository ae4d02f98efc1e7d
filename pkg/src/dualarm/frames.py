"""Rigid transforms shared by the kinematics and geometry modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-9


def _as_vec3(v, name="vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_rotation(rotation: np.ndarray, tol: float = ORTHO_TOL) -> None:
    """Raise ValueError unless ``rotation`` is a proper orthonormal 3x3 matrix."""
    if rotation.shape != (3, 3) or not np.all(np.isfinite(rotation)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > tol:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(rotation) - 1.0) > tol:
        raise ValueError("rotation determinant is not +1")


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform ``x -> R x + t`` (a 4x4 homogeneous matrix in block form)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = _as_vec3(self.translation, "translation")
        check_rotation(R)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def _raw(cls, rotation: np.ndarray, translation: np.ndarray) -> "Transform":
        # Skips validation; only for products of already-valid transforms.
        obj = object.__new__(cls)
        object.__setattr__(obj, "rotation", rotation)
        object.__setattr__(obj, "translation", translation)
        return obj

    @classmethod
    def identity(cls) -> "Transform":
        return cls._raw(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Transform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("homogeneous matrix must be 4x4")
        if np.max(np.abs(m[3] - [0, 0, 0, 1])) > ORTHO_TOL:
            raise ValueError("bottom row of a rigid transform must be [0, 0, 0, 1]")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "Transform") -> "Transform":
        R = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        return Transform._raw(R, t)

    def inverse(self) -> "Transform":
        # Closed form [R^T | -R^T t]; no general matrix inversion.
        Rt = self.rotation.T
        return Transform._raw(Rt.copy(), -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or a batch (n, 3) through the transform."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_inverse(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self.rotation

    def allclose(self, other: "Transform", atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def to_json(self) -> dict:
        return {"R": self.rotation.reshape(-1).tolist(), "t": self.translation.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Transform":
        return cls(np.asarray(obj["R"], dtype=float).reshape(3, 3), obj["t"])


_I3 = np.eye(3)
_I3.setflags(write=False)


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    k = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return _I3 + s * K + (1.0 - c) * (K @ K)


def rot_z(angle: float) -> np.ndarray:
    return axis_angle_rotation((0.0, 0.0, 1.0), angle)


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Box link geometry; ``frame_offset`` places the box centre relative to its link frame."""

    half_extents: np.ndarray
    frame_offset: Transform

    def __post_init__(self):
        h = _as_vec3(self.half_extents, "half_extents")
        if np.any(h <= 0):
            raise ValueError("cuboid half-extents must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "half_extents", h)

    def to_json(self) -> dict:
        return {"half_extents": self.half_extents.tolist(), "frame_offset": self.frame_offset.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "Cuboid":
        return cls(obj["half_extents"], Transform.from_json(obj["frame_offset"]))
