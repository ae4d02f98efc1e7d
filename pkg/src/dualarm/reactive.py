"""Reactive execution of latent-roadmap paths on arm_b around a scripted arm_a.

arm_b moves node to node along the active Dijkstra path by joint-space linear
interpolation. Simulated proximity sensors on arm_b read the distance to the
nearest arm_a box at every substep; a reading under ``d_safe`` blacklists the
upcoming node, sends arm_b back to the node it came from and triggers a
replan. A geometric oracle checks for true contact at every substep.

Time is simulated: a substep lasts its arm_b joint travel (L-infinity) over
``omega``, and arm_a's script advances by the same amount.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import PosedBox, boxes_collide, collides, points_box_distance, posed_boxes
from .kinematics import KinematicChain, end_effector_position, forward_kinematics
from .roadmap import LatentGraph, NoPathError, largest_component, shortest_path
from .sensors import face_point_local

log = logging.getLogger(__name__)

SCRIPT_KINDS = ("parked", "sweep", "chase")


@dataclass(frozen=True)
class SensorReading:
    link: int
    face: str
    uv: tuple[float, float]
    distance: float
    step: int


class Sensors:
    """Placed sensors with their link-frame positions precomputed."""

    def __init__(self, placements, chain_b: KinematicChain):
        self.placements = list(placements)
        self.links = np.array([p.link for p in self.placements], dtype=int)
        self.local = np.array(
            [face_point_local(chain_b, p.link, p.face, p.uv) for p in self.placements], dtype=float
        ).reshape(-1, 3)

    def __len__(self):
        return len(self.placements)

    def world_points(self, poses) -> np.ndarray:
        if not self.placements:
            return np.zeros((0, 3))
        return np.array([poses[k - 1].apply(p) for k, p in zip(self.links, self.local)])

    def distances(self, poses_b, boxes_a) -> np.ndarray:
        pts = self.world_points(poses_b)
        if len(pts) == 0:
            return np.zeros(0)
        return np.min([points_box_distance(pts, box) for box in boxes_a], axis=0)


def simulate_readings(placement, chain_b: KinematicChain, config_b, chain_a: KinematicChain, config_a, step: int = 0):
    """One reading per placed sensor: distance from its world position to the nearest arm_a box."""
    sensors = Sensors(placement, chain_b)
    if not len(sensors):
        return []
    dist = sensors.distances(forward_kinematics(chain_b, config_b), posed_boxes(chain_a, config_a))
    return [SensorReading(p.link, p.face, tuple(p.uv), float(d), step) for p, d in zip(sensors.placements, dist)]


# --- obstacle scripts --------------------------------------------------------


@dataclass
class ObstacleScript:
    """arm_a motion. ``speed`` is in rad/s (L-infinity over joints).

    parked: held at ``waypoints[0]``. sweep: back and forth along the
    waypoint polyline. chase: starts at ``waypoints[0]`` and steers its end
    effector toward arm_b's, stopping at ``standoff`` metres.
    """

    kind: str
    waypoints: list
    speed: float = 0.5
    standoff: float = 0.25

    def __post_init__(self):
        if self.kind not in SCRIPT_KINDS:
            raise ValueError(f"unknown script kind {self.kind!r}")
        self.waypoints = [np.asarray(w, dtype=float).reshape(6) for w in self.waypoints]
        if not self.waypoints:
            raise ValueError("script needs at least one waypoint")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    def to_json(self) -> dict:
        return {"kind": self.kind, "waypoints": [w.tolist() for w in self.waypoints],
                "speed": self.speed, "standoff": self.standoff}

    @classmethod
    def from_json(cls, obj: dict) -> "ObstacleScript":
        return cls(obj["kind"], obj["waypoints"], obj.get("speed", 0.5), obj.get("standoff", 0.25))


class ObstacleMotion:
    """Stateful player for an :class:`ObstacleScript`."""

    def __init__(self, script: ObstacleScript, chain_a: KinematicChain, chain_b: KinematicChain):
        self.script = script
        self.chain_a, self.chain_b = chain_a, chain_b
        self.q = script.waypoints[0].copy()
        self.t = 0.0
        w = script.waypoints
        self._seg = [float(np.max(np.abs(b - a))) for a, b in zip(w, w[1:])]
        self._total = sum(self._seg)

    def _sweep_at(self, t: float) -> np.ndarray:
        w = self.script.waypoints
        if self._total == 0.0:
            return w[0].copy()
        s = (self.script.speed * t) % (2 * self._total)
        if s > self._total:
            s = 2 * self._total - s
        for a, b, length in zip(w, w[1:], self._seg):
            if s <= length and length > 0:
                return a + (b - a) * (s / length)
            s -= length
        return w[-1].copy()

    def _chase_step(self, dt: float, q_b) -> None:
        target = end_effector_position(self.chain_b, q_b)
        ee = end_effector_position(self.chain_a, self.q)
        err = target - ee
        gap = float(np.linalg.norm(err))
        if gap <= self.script.standoff or dt == 0.0:
            return
        err *= (gap - self.script.standoff) / gap
        J = np.empty((3, 6))
        for i in range(6):
            # Difference inward at a joint limit.
            h = -1e-6 if self.q[i] + 1e-6 > self.chain_a.upper[i] else 1e-6
            dq = np.zeros(6)
            dq[i] = h
            J[:, i] = (end_effector_position(self.chain_a, self.q + dq) - ee) / h
        # Damped least squares, then cap the joint speed.
        step = J.T @ np.linalg.solve(J @ J.T + 1e-4 * np.eye(3), err)
        cap = self.script.speed * dt
        big = float(np.max(np.abs(step)))
        if big > cap:
            step *= cap / big
        self.q = self.chain_a.clip(self.q + step)

    def advance(self, dt: float, q_b) -> np.ndarray:
        self.t += dt
        if self.script.kind == "sweep":
            self.q = self._sweep_at(self.t)
        elif self.script.kind == "chase":
            self._chase_step(dt, q_b)
        return self.q


# --- episodes ----------------------------------------------------------------


@dataclass
class EpisodeConfig:
    start: np.ndarray
    goals: list
    script: ObstacleScript
    d_safe: float = 0.05
    max_steps: int = 20_000
    interp_substeps: int = 10
    omega: float = 1.0
    max_substep: float = 0.02  # rad; long edges get more than interp_substeps substeps
    approach_only: bool = False  # count a violation only while the min reading is falling
    blacklist_ttl: float = float("inf")  # simulated seconds a blacklisted node stays excluded
    seed: int = 0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(6)
        self.goals = [np.asarray(g, dtype=float).reshape(6) for g in self.goals]
        if not self.goals:
            raise ValueError("an episode needs at least one goal")
        if not self.d_safe > 0:
            raise ValueError("d_safe must be positive")
        if self.interp_substeps < 1 or self.omega <= 0 or self.max_steps < 1 or not self.max_substep > 0:
            raise ValueError("interp_substeps, omega, max_substep and max_steps must be positive")

    def substeps(self, q0, q1) -> int:
        return max(self.interp_substeps, int(np.ceil(float(np.max(np.abs(q1 - q0))) / self.max_substep)))

    def to_json(self) -> dict:
        return {
            "start": self.start.tolist(),
            "goals": [g.tolist() for g in self.goals],
            "script": self.script.to_json(),
            "d_safe": self.d_safe,
            "max_steps": self.max_steps,
            "interp_substeps": self.interp_substeps,
            "omega": self.omega,
            "max_substep": self.max_substep,
            "approach_only": self.approach_only,
            "blacklist_ttl": self.blacklist_ttl,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeConfig":
        return cls(
            obj["start"], obj["goals"], ObstacleScript.from_json(obj["script"]),
            d_safe=obj.get("d_safe", 0.05), max_steps=obj.get("max_steps", 20_000),
            interp_substeps=obj.get("interp_substeps", 10), omega=obj.get("omega", 1.0),
            max_substep=obj.get("max_substep", 0.02), approach_only=obj.get("approach_only", False),
            blacklist_ttl=obj.get("blacklist_ttl", float("inf")), seed=obj.get("seed", 0),
        )


@dataclass
class EpisodeResult:
    success: bool
    reason: str
    replans: int
    goals_reached: int
    steps: int
    motion_time: float  # simulated seconds
    plan_time: float  # wall-clock seconds, initial plans
    replan_time: float  # wall-clock seconds
    replan_latencies: list = field(default_factory=list, repr=False)  # wall-clock seconds per replan
    trace: list = field(default_factory=list, repr=False)

    @property
    def total_time(self) -> float:
        return self.plan_time + self.replan_time + self.motion_time

    def outcome(self) -> dict:
        """Everything except wall-clock timings (these alone vary between reruns)."""
        return {k: v for k, v in asdict(self).items() if k not in ("plan_time", "replan_time", "replan_latencies")}


class _Failed(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


def nearest_config_node(graph: LatentGraph, q, candidates) -> int:
    """Node in ``candidates`` whose decoded theta_b is closest to ``q`` (ties: smaller id)."""
    ids = np.asarray(candidates)
    d = graph.theta_b[ids] - np.asarray(q, dtype=float)
    return int(ids[int(np.argmin(np.einsum("ij,ij->i", d, d)))])


class _Runner:
    def __init__(self, graph, placement, chain_a, chain_b, ec: EpisodeConfig, component):
        self.g, self.ec = graph, ec
        self.chain_a, self.chain_b = chain_a, chain_b
        self.sensors = Sensors(placement, chain_b)
        self.motion = ObstacleMotion(ec.script, chain_a, chain_b)
        self.cand = np.array(sorted(component if component is not None else largest_component(graph)))
        self.q_b = ec.start.copy()
        self.step = 0
        self.motion_time = 0.0
        self.plan_time = 0.0
        self.replan_time = 0.0
        self.replans = 0
        self.replan_latencies = []
        self.trace = []
        self.last_low = float("inf")

    def _substep(self, q_next, phase, frm, to, watch):
        """Advance both arms by one substep. Returns True on a threshold violation."""
        if self.step >= self.ec.max_steps:
            raise _Failed("max_steps")
        dt = float(np.max(np.abs(q_next - self.q_b))) / self.ec.omega
        self.q_b = q_next
        q_a = self.motion.advance(dt, self.q_b)
        self.motion_time += dt
        self.step += 1
        poses_b = forward_kinematics(self.chain_b, self.q_b)
        boxes_a = posed_boxes(self.chain_a, q_a)
        boxes_b = [PosedBox.from_pose(link.geometry, pose) for link, pose in zip(self.chain_b.links, poses_b)]
        readings = self.sensors.distances(poses_b, boxes_a)
        low = float(readings.min()) if len(readings) else float("inf")
        violation = watch and low < self.ec.d_safe and (not self.ec.approach_only or low < self.last_low)
        self.last_low = low
        rec = {
            "kind": "step", "step": self.step, "t": self.motion.t, "phase": phase, "from": frm, "to": to,
            "q_a": q_a.tolist(), "q_b": self.q_b.tolist(), "readings": readings.tolist(), "violation": violation,
        }
        self.trace.append(rec)
        if boxes_collide(boxes_a, boxes_b, 0.0):
            rec["collision"] = True
            raise _Failed("collision")
        return violation

    def _travel(self, target, phase, frm, to, watch):
        """Interpolate arm_b to ``target``. Returns the substep index of a violation, else None."""
        q0 = self.q_b.copy()
        n = self.ec.substeps(q0, target)
        for s in range(1, n + 1):
            if self._substep(q0 + (target - q0) * (s / n), phase, frm, to, watch):
                return s
        return None

    def _retreat(self, cur, upcoming):
        target = self.g.theta_b[cur]
        q0 = self.q_b.copy()
        n = self.ec.substeps(q0, target)
        for s in range(1, n + 1):
            self._substep(q0 + (target - q0) * (s / n), "retreat", upcoming, cur, False)

    def _active(self, blacklist: dict) -> set:
        return {v for v, t in blacklist.items() if self.motion.t - t < self.ec.blacklist_ttl}

    def _plan(self, cur, goal_node, blacklist, initial):
        t0 = time.perf_counter()
        blacklist = self._active(blacklist)
        try:
            path = shortest_path(self.g, cur, goal_node, blacklist)
        except NoPathError:
            raise _Failed("no_path") from None
        finally:
            if initial:
                self.plan_time += time.perf_counter() - t0
            else:
                self.replan_time += time.perf_counter() - t0
                self.replan_latencies.append(time.perf_counter() - t0)
        self.trace.append({"kind": "plan", "step": self.step, "path": list(path.nodes), "blacklist": sorted(blacklist)})
        return path

    def run(self) -> tuple[str, int]:
        goals_done = 0
        try:
            cur = nearest_config_node(self.g, self.q_b, self.cand)
            self._travel(self.g.theta_b[cur], "approach", cur, cur, False)
            for goal in self.ec.goals:
                goal_node = nearest_config_node(self.g, goal, self.cand)
                blacklist: dict[int, float] = {}  # node -> time it was filtered
                path = self._plan(cur, goal_node, blacklist, True)
                i = 0
                while cur != goal_node:
                    nxt = path.nodes[i + 1]
                    if self._travel(self.g.theta_b[nxt], "move", cur, nxt, True) is None:
                        cur = nxt
                        i += 1
                        continue
                    self.replans += 1
                    # The goal itself is never filtered out; arm_b backs off and retries it.
                    if nxt != goal_node:
                        blacklist[nxt] = self.motion.t
                    self._retreat(cur, nxt)
                    path = self._plan(cur, goal_node, blacklist, False)
                    i = 0
                goals_done += 1
            return "reached", goals_done
        except _Failed as exc:
            return exc.reason, goals_done


def run_episode(graph: LatentGraph, placement, chain_a: KinematicChain, chain_b: KinematicChain,
                ec: EpisodeConfig, component=None) -> EpisodeResult:
    """Execute one episode; failures (contact, no path, step budget) are reported, not raised."""
    r = _Runner(graph, placement, chain_a, chain_b, ec, component)
    reason, goals_done = r.run()
    return EpisodeResult(
        success=reason == "reached", reason=reason, replans=r.replans, goals_reached=goals_done,
        steps=r.step, motion_time=r.motion_time, plan_time=r.plan_time, replan_time=r.replan_time,
        replan_latencies=r.replan_latencies, trace=r.trace,
    )


def replay_is_collision_free(trace, chain_a: KinematicChain, chain_b: KinematicChain) -> bool:
    """Re-check every recorded substep against the geometry oracle at zero clearance."""
    for rec in trace:
        if rec["kind"] == "step" and collides(chain_a, rec["q_a"], chain_b, rec["q_b"], 0.0):
            return False
    return True


def compute_metrics(results) -> dict:
    if not results:
        raise ValueError("no episode results")
    n = len(results)
    return {
        "episodes": n,
        "SR": 100.0 * sum(r.success for r in results) / n,
        "T_mean": float(np.mean([r.total_time for r in results])),
        "T_motion_mean": float(np.mean([r.motion_time for r in results])),
        "replans_mean": float(np.mean([r.replans for r in results])),
    }
