"""Proximity-sensor placement from logged contact points.

Contact points are stored in world coordinates. Each one is pulled back into its
link frame at the sample's own arm_b configuration, then into the link box's
frame, snapped to the nearest box face and described by two in-plane
coordinates. A face's sensor goes at the mean of its hits.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .kinematics import KinematicChain, link_to_world_frame, link_transform

log = logging.getLogger(__name__)

FACES = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
# face -> (normal axis, sign, in-plane axes u, v)
FACE_AXES = {
    "+X": (0, 1.0, 1, 2),
    "-X": (0, -1.0, 1, 2),
    "+Y": (1, 1.0, 0, 2),
    "-Y": (1, -1.0, 0, 2),
    "+Z": (2, 1.0, 0, 1),
    "-Z": (2, -1.0, 0, 1),
}
FACE_TOL = 1e-6
DEFAULT_LINKS = (2, 3, 4, 5, 6)


class InsufficientHits(ValueError):
    pass


@dataclass(frozen=True)
class FaceHit:
    link: int
    face: str
    uv: tuple[float, float]


@dataclass(frozen=True)
class SensorPlacement:
    link: int
    face: str
    uv: tuple[float, float]
    n_hits: int


def face_extents(chain: KinematicChain, link: int, face: str) -> tuple[float, float]:
    h = chain.links[link - 1].geometry.half_extents
    _, _, u, v = FACE_AXES[face]
    return float(h[u]), float(h[v])


def face_point_local(chain: KinematicChain, link: int, face: str, uv) -> np.ndarray:
    """Point on a face given its in-plane coordinates, in the link frame."""
    geom = chain.links[link - 1].geometry
    axis, sign, u, v = FACE_AXES[face]
    p = np.zeros(3)
    p[axis] = sign * geom.half_extents[axis]
    p[u], p[v] = uv
    return geom.frame_offset.apply(p)


def face_point_world(chain: KinematicChain, config, link: int, face: str, uv) -> np.ndarray:
    return link_to_world_frame(chain, link, config, face_point_local(chain, link, face, uv))


def assign_face(p_box: np.ndarray, half_extents: np.ndarray) -> tuple[str, tuple[float, float], float]:
    """Nearest face rectangle to a point given in the box frame (ties: FACES order)."""
    best = None
    for face in FACES:
        axis, sign, u, v = FACE_AXES[face]
        dn = p_box[axis] - sign * half_extents[axis]
        du = max(abs(p_box[u]) - half_extents[u], 0.0)
        dv = max(abs(p_box[v]) - half_extents[v], 0.0)
        d = float(np.sqrt(dn * dn + du * du + dv * dv))
        if best is None or d < best[2]:
            best = (face, (float(p_box[u]), float(p_box[v])), d)
    return best


def tag_collision_points(ds: Dataset, chain_b: KinematicChain, links=DEFAULT_LINKS, tol: float = FACE_TOL):
    """Face hits for every logged contact on the given arm_b links.

    Returns ``(hits, n_rejected)``; a point further than ``tol`` from every face
    of its link box is rejected and counted.
    """
    hits = []
    rejected = 0
    links = set(links)
    for s in ds.samples:
        for link, p_world in s.collisions:
            if link not in links:
                continue
            pose = link_transform(chain_b, link, s.theta_b)
            geom = chain_b.links[link - 1].geometry
            p_box = geom.frame_offset.apply_inverse(pose.apply_inverse(p_world))
            face, uv, d = assign_face(p_box, geom.half_extents)
            if d > tol:
                rejected += 1
                continue
            hits.append(FaceHit(link, face, uv))
    if rejected:
        log.warning("rejected %d contact points further than %g m from any face", rejected, tol)
    return hits, rejected


def _face_uv(hits, link, face) -> np.ndarray:
    uv = [h.uv for h in hits if h.link == link and h.face == face]
    return np.asarray(uv, dtype=float).reshape(-1, 2)


def optimal_placement(hits, link: int, face: str, extents, min_hits: int = 30, statistic: str = "mean") -> SensorPlacement:
    """Sensor location on one face: the expected hit position, clamped onto the face.

    ``extents`` are the face half-sizes along (u, v). ``statistic`` may be
    switched to "median" or "mode" (peak of a 10x10 histogram).
    """
    uv = _face_uv(hits, link, face)
    if len(uv) < max(min_hits, 1):
        raise InsufficientHits(f"link {link} face {face}: {len(uv)} hits < {min_hits}")
    if statistic == "mean":
        loc = uv.mean(axis=0)
    elif statistic == "median":
        loc = np.median(uv, axis=0)
    elif statistic == "mode":
        counts, ue, ve = face_histogram(hits, link, face, extents, bins=10)
        i, j = np.unravel_index(np.argmax(counts), counts.shape)
        loc = np.array([(ue[i] + ue[i + 1]) / 2, (ve[j] + ve[j + 1]) / 2])
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    hu, hv = extents
    loc = np.clip(loc, [-hu, -hv], [hu, hv])
    return SensorPlacement(link, face, (float(loc[0]), float(loc[1])), len(uv))


def face_histogram(hits, link: int, face: str, extents, bins: int = 10):
    """2-D hit counts over the face rectangle: ``(counts, u_edges, v_edges)``."""
    uv = _face_uv(hits, link, face)
    if len(uv) == 0:
        raise InsufficientHits(f"link {link} face {face}: no hits")
    hu, hv = extents
    uv = np.clip(uv, [-hu, -hv], [hu, hv])
    return np.histogram2d(uv[:, 0], uv[:, 1], bins=bins, range=[[-hu, hu], [-hv, hv]])


def place_sensors(hits, chain_b: KinematicChain, links=DEFAULT_LINKS, min_hits: int = 30, statistic: str = "mean"):
    """Placements for every (link, face) with enough hits, plus the skipped groups."""
    placements = []
    skipped = []
    for link in links:
        for face in FACES:
            try:
                placements.append(
                    optimal_placement(hits, link, face, face_extents(chain_b, link, face), min_hits, statistic)
                )
            except InsufficientHits:
                skipped.append((link, face, len(_face_uv(hits, link, face))))
    if skipped:
        log.info("faces below %d hits: %s", min_hits, ", ".join(f"{k}{f}({n})" for k, f, n in skipped))
    return placements, skipped


def write_placement(placements, path) -> None:
    out: dict = {}
    for p in placements:
        out.setdefault(str(p.link), {})[p.face] = {"uv": list(p.uv), "n_hits": p.n_hits}
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def read_placement(path) -> list[SensorPlacement]:
    obj = json.loads(Path(path).read_text())
    out = []
    for link in sorted(obj, key=int):
        for face in FACES:
            if face in obj[link]:
                entry = obj[link][face]
                out.append(SensorPlacement(int(link), face, tuple(entry["uv"]), int(entry["n_hits"])))
    return out


def write_histogram_csv(counts: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u_bin", "v_bin", "count"])
        for (i, j), c in np.ndenumerate(counts):
            w.writerow([i, j, int(c)])
