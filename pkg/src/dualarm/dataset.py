"""Random dual-arm pose samples labelled with a collision flag and contact points.

Flag convention follows the collision indicator: 1 means the pose pair is
safe, 0 means the arms touch. Every sample draws from its own generator seeded
by ``(seed, index)``, so any slice of the corpus can be regenerated alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import collides, contact_witnesses
from .kinematics import KinematicChain

log = logging.getLogger(__name__)

SAFE = 1
COLLIDED = 0


class DatasetFormatError(ValueError):
    pass


@dataclass
class Sample:
    theta_a: np.ndarray
    theta_b: np.ndarray
    flag: int
    collisions: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.theta_a = np.asarray(self.theta_a, dtype=float)
        self.theta_b = np.asarray(self.theta_b, dtype=float)
        self.flag = int(self.flag)
        if self.flag not in (SAFE, COLLIDED):
            raise ValueError(f"flag must be 0 or 1, got {self.flag}")
        if (self.flag == COLLIDED) != bool(self.collisions):
            raise ValueError("flag 0 requires collision points and flag 1 forbids them")
        self.collisions = [(int(k), np.asarray(p, dtype=float)) for k, p in self.collisions]

    def to_json(self) -> dict:
        return {
            "theta_a": self.theta_a.tolist(),
            "theta_b": self.theta_b.tolist(),
            "flag": self.flag,
            "collisions": [{"link": k, "point_world": p.tolist()} for k, p in self.collisions],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Sample":
        theta_a = np.asarray(obj["theta_a"], dtype=float)
        theta_b = np.asarray(obj["theta_b"], dtype=float)
        if theta_a.shape != (6,) or theta_b.shape != (6,):
            raise ValueError("theta_a and theta_b need 6 angles each")
        hits = [(c["link"], c["point_world"]) for c in obj["collisions"]]
        for _, p in hits:
            if len(p) != 3:
                raise ValueError("point_world needs 3 coordinates")
        return cls(theta_a, theta_b, obj["flag"], hits)

    def same_as(self, other: "Sample") -> bool:
        return (
            np.array_equal(self.theta_a, other.theta_a)
            and np.array_equal(self.theta_b, other.theta_b)
            and self.flag == other.flag
            and len(self.collisions) == len(other.collisions)
            and all(k1 == k2 and np.array_equal(p1, p2) for (k1, p1), (k2, p2) in zip(self.collisions, other.collisions))
        )


@dataclass
class Dataset:
    samples: list[Sample]
    seed: int | None = None
    chains: tuple[str, str] = ("arm_1", "arm_2")

    def __len__(self):
        return len(self.samples)

    def flags(self) -> np.ndarray:
        return np.array([s.flag for s in self.samples], dtype=int)

    def collision_fraction(self) -> float:
        return float(np.mean(self.flags() == COLLIDED)) if self.samples else 0.0

    def same_as(self, other: "Dataset") -> bool:
        return len(self) == len(other) and all(a.same_as(b) for a, b in zip(self.samples, other.samples))


def sample_random_config(chain: KinematicChain, rng: np.random.Generator) -> np.ndarray:
    """Each joint uniform over its limits."""
    return rng.uniform(chain.lower, chain.upper)


def label_pair(chain_a: KinematicChain, theta_a, chain_b: KinematicChain, theta_b) -> Sample:
    """Build a sample for one pose pair: flag from the clearance-0 test, contacts on arm_b."""
    if collides(chain_a, theta_a, chain_b, theta_b, 0.0):
        hits = contact_witnesses(chain_a, theta_a, chain_b, theta_b)
        return Sample(theta_a, theta_b, COLLIDED, sorted(hits.items()))
    return Sample(theta_a, theta_b, SAFE, [])


def generate_samples(chain_a, chain_b, seed: int, start: int, stop: int) -> list[Sample]:
    out = []
    for i in range(start, stop):
        rng = np.random.default_rng((seed, i))
        qa = sample_random_config(chain_a, rng)
        qb = sample_random_config(chain_b, rng)
        out.append(label_pair(chain_a, qa, chain_b, qb))
    return out


def generate_dataset(chain_a: KinematicChain, chain_b: KinematicChain, n_samples: int, seed: int) -> Dataset:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    ds = Dataset(generate_samples(chain_a, chain_b, seed, 0, n_samples), seed, (chain_a.name, chain_b.name))
    log.info("generated %d samples, collision fraction %.4f", len(ds), ds.collision_fraction())
    return ds


def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for s in ds.samples:
            fh.write(json.dumps(s.to_json(), separators=(",", ":")) + "\n")


def read_dataset(path) -> Dataset:
    samples = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(Sample.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    return Dataset(samples)
