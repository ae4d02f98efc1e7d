"""Forward kinematics of a 6-DoF revolute chain and world/link point transforms.

Joint configurations are plain float arrays of shape (6,), in radians. A chain
is read from ``chain.json``; link ``i``'s local transform is its fixed offset
followed by a rotation of ``q[i-1]`` about the link's joint axis, so the world
pose of link ``k`` is the ordered product of the first ``k`` local transforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .frames import Cuboid, Transform

N_JOINTS = 6


class JointLimitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinkSpec:
    joint_axis: np.ndarray
    fixed_offset: Transform
    joint_limits: tuple[float, float]
    geometry: Cuboid

    def __post_init__(self):
        axis = np.asarray(self.joint_axis, dtype=float).reshape(-1)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit 3-vector")
        lo, hi = (float(v) for v in self.joint_limits)
        if not lo <= hi:
            raise ValueError(f"joint limits must satisfy lo <= hi, got {lo}, {hi}")
        axis.setflags(write=False)
        object.__setattr__(self, "joint_axis", axis)
        object.__setattr__(self, "joint_limits", (lo, hi))
        # Rodrigues terms folded with the fixed offset: R_off (I + s K + (1 - c) K^2).
        K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
        R0 = self.fixed_offset.rotation
        object.__setattr__(self, "_rot_terms", (R0, R0 @ K, R0 @ (K @ K)))

    def local_transform(self, angle: float) -> Transform:
        R0, RK, RK2 = self._rot_terms
        c, s = math.cos(angle), math.sin(angle)
        return Transform._raw(R0 + s * RK + (1.0 - c) * RK2, self.fixed_offset.translation)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    links: tuple[LinkSpec, ...]
    name: str = "arm"

    def __post_init__(self):
        links = tuple(self.links)
        if len(links) != N_JOINTS:
            raise ValueError(f"a chain needs exactly {N_JOINTS} links, got {len(links)}")
        object.__setattr__(self, "links", links)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lk.joint_limits[0] for lk in self.links])

    @property
    def upper(self) -> np.ndarray:
        return np.array([lk.joint_limits[1] for lk in self.links])

    def clip(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.lower, self.upper)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "links": [
                {
                    "axis": lk.joint_axis.tolist(),
                    "offset": lk.fixed_offset.to_json(),
                    "limits": list(lk.joint_limits),
                    "cuboid": lk.geometry.to_json(),
                }
                for lk in self.links
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KinematicChain":
        links = []
        for entry in obj["links"]:
            limits = entry.get("limits", [-np.pi, np.pi])
            links.append(
                LinkSpec(
                    joint_axis=entry["axis"],
                    fixed_offset=Transform.from_json(entry["offset"]),
                    joint_limits=(limits[0], limits[1]),
                    geometry=Cuboid.from_json(entry["cuboid"]),
                )
            )
        return cls(tuple(links), obj.get("name", "arm"))


def load_chain(path) -> KinematicChain:
    with open(path) as fh:
        return KinematicChain.from_json(json.load(fh))


def save_chain(chain: KinematicChain, path) -> None:
    Path(path).write_text(json.dumps(chain.to_json(), indent=2) + "\n")


def default_chain(which: str = "arm_1") -> KinematicChain:
    """Load one of the two packaged demo arms (``arm_1`` or ``arm_2``)."""
    ref = resources.files("dualarm") / "data" / f"chain_{which}.json"
    return KinematicChain.from_json(json.loads(ref.read_text()))


def check_config(chain: KinematicChain, config) -> np.ndarray:
    q = np.asarray(config, dtype=float)
    if q.shape != (N_JOINTS,):
        raise ValueError(f"joint config must have shape ({N_JOINTS},), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint config must be finite")
    bad = np.nonzero((q < chain.lower) | (q > chain.upper))[0]
    if bad.size:
        i = int(bad[0])
        raise JointLimitError(f"joint {i} = {q[i]:.6g} outside limits {chain.links[i].joint_limits}")
    return q


def _check_index(link_index: int) -> int:
    if not 1 <= int(link_index) <= N_JOINTS:
        raise IndexError(f"link index must be in 1..{N_JOINTS}, got {link_index}")
    return int(link_index)


def link_transform(chain: KinematicChain, link_index: int, config) -> Transform:
    """World pose of link ``link_index`` (1-based): T_0^1 ... T_{k-1}^k at ``config``."""
    k = _check_index(link_index)
    q = check_config(chain, config)
    pose = Transform.identity()
    for i in range(k):
        pose = pose @ chain.links[i].local_transform(q[i])
    return pose


def forward_kinematics(chain: KinematicChain, config) -> list[Transform]:
    """Poses of all six links; element 5 is the end-effector link."""
    q = check_config(chain, config)
    poses = []
    pose = Transform.identity()
    for link, angle in zip(chain.links, q):
        pose = pose @ link.local_transform(angle)
        poses.append(pose)
    return poses


def world_to_link_frame(chain: KinematicChain, link_index: int, config, point_world) -> np.ndarray:
    p = np.asarray(point_world, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError("point must be a finite 3-vector")
    return link_transform(chain, link_index, config).inverse().apply(p)


def link_to_world_frame(chain: KinematicChain, link_index: int, config, point_local) -> np.ndarray:
    p = np.asarray(point_local, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError("point must be a finite 3-vector")
    return link_transform(chain, link_index, config).apply(p)


def end_effector_position(chain: KinematicChain, config) -> np.ndarray:
    """Tip of the last link's box along its local +z (the far face centre)."""
    last = chain.links[-1].geometry
    tip_local = last.frame_offset.apply(np.array([0.0, 0.0, last.half_extents[2]]))
    return forward_kinematics(chain, config)[-1].apply(tip_local)


def make_serial_chain(
    lengths,
    half_widths,
    base: Transform | None = None,
    axes=("z", "y", "z", "y", "z", "y"),
    limits=(-np.pi, np.pi),
    name: str = "arm",
) -> KinematicChain:
    """Build a straight-up chain: each link is a box along local +z ending at the next joint."""
    unit = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
    links = []
    prev_len = 0.0
    for i, (length, hw, ax) in enumerate(zip(lengths, half_widths, axes)):
        offset = Transform(np.eye(3), [0.0, 0.0, prev_len])
        if i == 0 and base is not None:
            offset = base @ offset
        box = Cuboid([hw, hw, length / 2.0], Transform(np.eye(3), [0.0, 0.0, length / 2.0]))
        links.append(LinkSpec(unit[ax], offset, limits, box))
        prev_len = length
    return KinematicChain(tuple(links), name)
