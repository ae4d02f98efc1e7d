"""Seeded benchmark scenarios: arm_a obstacle scripts plus arm_b start and goal configs.

Goals are joint-space configs taken from roadmap nodes, so no inverse
kinematics is needed. Mode A has one goal per episode, mode B several in
sequence.

Episodes are drawn so that they are solvable on the roadmap: start, goals and
at least one connecting route use only nodes whose arm_b pose stays clear of
everything arm_a sweeps through. The shortest route usually does not, which
is where reactive avoidance matters.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PosedBox, boxes_collide, boxes_within, points_box_distance, posed_boxes
from .kinematics import KinematicChain, forward_kinematics
from .reactive import EpisodeConfig, ObstacleScript
from .roadmap import shortest_path

# arm_a leaning away from arm_b; sweeps wander around this posture.
HOME_A = np.array([0.0, -0.6, 0.0, -0.6, 0.0, 0.0])


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "A"
    n_goals_b: int = 3
    script: str = "sweep"
    n_waypoints: int = 3
    amplitude: float = 1.0  # rad, waypoint spread around HOME_A
    speed: float = 0.25  # rad/s
    base_margin: float = 0.05  # arm_a keeps this far from arm_b's base link
    route_margin: float = 0.12  # start, goals and one connecting route keep this far from the sweep
    contested: bool = True  # the unobstructed shortest route must cut through the swept volume
    d_safe: float = 0.1  # m; 0.05 leaves contacts between sensor points undetected
    max_steps: int = 20_000
    interp_substeps: int = 10
    omega: float = 1.0
    max_substep: float = 0.02
    approach_only: bool = True  # otherwise a low reading at the current node blacklists every exit
    blacklist_ttl: float = float("inf")
    max_tries: int = 1000

    def n_goals(self) -> int:
        if self.mode == "A":
            return 1
        if self.mode == "B":
            return self.n_goals_b
        raise ValueError(f"mode must be A or B, got {self.mode!r}")


def sweep_samples(waypoints, samples: int = 12) -> list[np.ndarray]:
    """Configs along the waypoint polyline, ``samples`` per segment."""
    pts = [np.asarray(waypoints[0], dtype=float)]
    for a, b in zip(waypoints, waypoints[1:]):
        pts += [a + (b - a) * s for s in np.linspace(0, 1, samples)[1:]]
    return pts


def sweep_boxes(chain_a: KinematicChain, waypoints, samples: int = 12) -> list[PosedBox]:
    """arm_a boxes of links 2..6 along the sweep (link 1 is handled by :func:`base_hull`)."""
    return [b for q in sweep_samples(waypoints, samples) for b in posed_boxes(chain_a, q)[1:]]


def base_hull(chain: KinematicChain) -> PosedBox:
    """A box containing link 1 at every angle of the first joint.

    The link sweeps a solid of revolution about the joint axis; the box is the
    square prism around the enclosing cylinder.
    """
    link = chain.links[0]
    axis = link.fixed_offset.rotation @ link.joint_axis
    origin = link.fixed_offset.translation
    rel = PosedBox.from_pose(link.geometry, link.local_transform(0.0)).vertices() - origin
    s = rel @ axis
    r = float(np.max(np.linalg.norm(rel - np.outer(s, axis), axis=1)))
    # Orthonormal frame with the joint axis as its third column.
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, axis)
    x /= np.linalg.norm(x)
    frame = np.column_stack([x, np.cross(axis, x), axis])
    centre = origin + axis * (s.min() + s.max()) / 2.0
    return PosedBox(frame, centre, [r, r, (s.max() - s.min()) / 2.0])


def sweep_clear_of_base(waypoints, chain_a: KinematicChain, chain_b: KinematicChain, margin: float, samples: int = 12) -> bool:
    """True if arm_a, moving along the polyline, never comes within ``margin`` of arm_b's base link."""
    base_boxes = []
    for ang in np.linspace(-np.pi, np.pi, 8, endpoint=False):
        q = np.zeros(6)
        q[0] = ang
        base_boxes.append(PosedBox.from_pose(chain_b.links[0].geometry, forward_kinematics(chain_b, q)[0]))
    return not any(boxes_collide(posed_boxes(chain_a, q), base_boxes, margin) for q in sweep_samples(waypoints, samples))


class NodeBoxes:
    """arm_b boxes of links 2..6 at every node in ``ids``, stacked for vectorised clearance tests.

    Link 1 only turns about the base axis; :func:`sweep_clear_of_base` covers it.
    """

    def __init__(self, graph, ids, chain_b: KinematicChain):
        self.ids = np.asarray(sorted(ids), dtype=int)
        self.boxes = [posed_boxes(chain_b, graph.theta_b[v])[1:] for v in self.ids]
        n = len(self.ids)
        self.centers = np.array([[b.center for b in bs] for bs in self.boxes]).reshape(n, 5, 3)
        self.rotations = np.array([[b.rotation for b in bs] for bs in self.boxes]).reshape(n, 5, 3, 3)
        self.half = np.array([link.geometry.half_extents for link in chain_b.links[1:]])
        self.radii = np.linalg.norm(self.half, axis=1)
        self._flat_c = self.centers.reshape(-1, 3)
        self._flat_r = self.rotations.reshape(-1, 3, 3)
        self._flat_h = np.tile(self.half, (n, 1))
        self._flat_rad = np.tile(self.radii, n)
        self._tree = cKDTree(self._flat_c)
        self._base_cache: dict = {}

    def near_base(self, chain_a: KinematicChain, margin: float) -> np.ndarray:
        """Mask of nodes within ``margin`` of arm_a's link 1 at some base angle (conservative, cached)."""
        key = (id(chain_a), margin)
        if key not in self._base_cache:
            self._base_cache[key] = self.near([base_hull(chain_a)], margin)
        return self._base_cache[key]

    def near(self, boxes_a, margin: float, within: np.ndarray | None = None) -> np.ndarray:
        """Mask over ``ids``: node pose comes within ``margin`` of any box in ``boxes_a``.

        Exact: a KD-tree over box centres prunes by bounding spheres, each
        node-box centre gives an upper bound, the projection gap along the 15
        separating axes a lower bound, and only undecided pairs go to GJK.
        Nodes outside the optional ``within`` mask are skipped and reported False.
        """
        n = len(self.ids)
        hit = np.zeros(n, dtype=bool)
        skip = np.zeros(n, dtype=bool) if within is None else ~np.asarray(within, dtype=bool)
        reach = float(self.radii.max()) + margin
        for ba in boxes_a:
            idx = np.asarray(self._tree.query_ball_point(ba.center, ba.radius + reach), dtype=int)
            if not len(idx):
                continue
            idx = idx[~(hit | skip)[idx // 5]]
            if not len(idx):
                continue
            c = self._flat_c[idx]
            upper = points_box_distance(c, ba)
            sure = idx[upper <= margin]
            hit[sure // 5] = True
            idx = idx[(upper > margin) & (upper - self._flat_rad[idx] <= margin)]
            if not len(idx):
                continue
            d = ba.center - self._flat_c[idx]
            R, h = self._flat_r[idx], self._flat_h[idx]
            C = np.einsum("ki,mkj->mij", ba.rotation, R)  # a_i . b_j
            absC = np.abs(C)
            T = d @ ba.rotation  # centre offset in ba's frame
            ha = ba.half_extents
            gap_a = np.abs(T) - ha - np.einsum("mij,mj->mi", absC, h)
            gap_b = np.abs(np.einsum("mj,mjk->mk", d, R)) - h - absC.transpose(0, 2, 1) @ ha
            lower = np.maximum(gap_a.max(axis=1), gap_b.max(axis=1))
            # Edge-edge axes a_i x b_j, skipped when nearly parallel.
            for i in range(3):
                i1, i2 = (i + 1) % 3, (i + 2) % 3
                for j in range(3):
                    j1, j2 = (j + 1) % 3, (j + 2) % 3
                    norm = np.sqrt(np.maximum(1.0 - C[:, i, j] ** 2, 0.0))
                    ra = ha[i1] * absC[:, i2, j] + ha[i2] * absC[:, i1, j]
                    rb = h[:, j1] * absC[:, i, j2] + h[:, j2] * absC[:, i, j1]
                    proj = np.abs(T[:, i2] * C[:, i1, j] - T[:, i1] * C[:, i2, j])
                    ok = norm > 1e-6
                    gap = np.full(len(idx), -np.inf)
                    gap[ok] = (proj[ok] - ra[ok] - rb[ok]) / norm[ok]
                    lower = np.maximum(lower, gap)
            for f in idx[lower <= margin]:
                i, l = divmod(int(f), 5)
                if not hit[i] and boxes_within(ba, self.boxes[i][l], margin):
                    hit[i] = True
        return hit


def _components(graph, allowed: set) -> list[list[int]]:
    comps, seen = [], set()
    for s in sorted(allowed):
        if s in seen:
            continue
        comp, todo = {s}, deque([s])
        while todo:
            u = todo.popleft()
            for v in graph.adj.get(u, ()):
                if v in allowed and v not in comp:
                    comp.add(v)
                    todo.append(v)
        seen |= comp
        comps.append(sorted(comp))
    return comps


def clear_components(graph, nodes: NodeBoxes, boxes_a, margin: float) -> list[list[int]]:
    """Connected components (sorted id lists) of the roadmap restricted to nodes clear of ``boxes_a``."""
    return _components(graph, set(nodes.ids[~nodes.near(boxes_a, margin)].tolist()))


def make_script(chain_a: KinematicChain, chain_b: KinematicChain, cfg: ScenarioConfig, rng: np.random.Generator) -> ObstacleScript:
    for _ in range(cfg.max_tries):
        n = 1 if cfg.script == "parked" else cfg.n_waypoints
        w = [chain_a.clip(HOME_A + rng.uniform(-cfg.amplitude, cfg.amplitude, 6)) for _ in range(n)]
        if sweep_clear_of_base(w, chain_a, chain_b, cfg.base_margin):
            return ObstacleScript(cfg.script, w, speed=cfg.speed)
    raise ScenarioError("could not draw an obstacle script clear of arm_b's base")


def make_episode(graph, component, chain_a: KinematicChain, chain_b: KinematicChain, cfg: ScenarioConfig,
                 seed: int, index: int = 0, nodes: NodeBoxes | None = None) -> EpisodeConfig:
    """One solvable episode: a script, then start and goals in one sweep-clear roadmap component.

    The start is drawn uniformly over clear nodes in components big enough for
    all targets, the goals (distinct) uniformly from the start's component.
    With ``contested`` set, draws are kept only if some leg's unobstructed
    shortest route has a node inside the swept volume.
    """
    rng = np.random.default_rng((seed, index))
    nodes = nodes if nodes is not None else NodeBoxes(graph, component, chain_b)
    need = cfg.n_goals() + 1
    tries = 0
    while tries < cfg.max_tries:
        script = make_script(chain_a, chain_b, cfg, rng)
        sweep = sweep_boxes(chain_a, script.waypoints)
        near = nodes.near(sweep, cfg.route_margin) | nodes.near_base(chain_a, cfg.route_margin)
        blocked = set(nodes.ids[nodes.near(sweep, 0.0, within=near)].tolist()) if cfg.contested else set()
        pool = [c for c in _components(graph, set(nodes.ids[~near].tolist())) if len(c) >= need]
        owner = np.concatenate([[k] * len(c) for k, c in enumerate(pool)]) if pool else []
        # A few target draws per script before drawing a new one.
        for _ in range(8):
            tries += 1
            if not pool:
                break
            comp = pool[int(owner[rng.integers(len(owner))])]
            picked = [int(v) for v in rng.choice(comp, size=need, replace=False)]
            if cfg.contested and not any(
                blocked.intersection(shortest_path(graph, a, b).nodes) for a, b in zip(picked, picked[1:])
            ):
                continue
            return EpisodeConfig(
                graph.theta_b[picked[0]], [graph.theta_b[v] for v in picked[1:]], script,
                d_safe=cfg.d_safe, max_steps=cfg.max_steps, interp_substeps=cfg.interp_substeps,
                omega=cfg.omega, max_substep=cfg.max_substep,
                approach_only=cfg.approach_only, blacklist_ttl=cfg.blacklist_ttl, seed=seed,
            )
    raise ScenarioError("could not draw a solvable episode")


def make_episodes(graph, component, chain_a, chain_b, cfg: ScenarioConfig, n: int, seed: int) -> list[EpisodeConfig]:
    nodes = NodeBoxes(graph, component, chain_b)
    return [make_episode(graph, component, chain_a, chain_b, cfg, seed, i, nodes) for i in range(n)]
