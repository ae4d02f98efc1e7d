"""Latent roadmap: KNN graph over safe latent points, Dijkstra queries, node blacklists.

Adjacency is a dict of dicts (node -> neighbour -> weight), weights are
Euclidean latent distances, and only safe nodes carry edges. Blacklists are
per-query sets, so one built graph can serve any number of planners.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .dataset import Dataset
from .vae import VaeModel, classify_latent, decode_theta_b, pose_vectors

log = logging.getLogger(__name__)


class GraphBuildError(RuntimeError):
    pass


class NoPathError(RuntimeError):
    def __init__(self, start, goal, start_size, goal_size):
        super().__init__(
            f"no path from {start} to {goal}: start component has {start_size} nodes, goal component has {goal_size}"
        )
        self.start, self.goal = start, goal
        self.start_size, self.goal_size = start_size, goal_size


@dataclass
class LatentGraph:
    z: np.ndarray  # (n, 2)
    safe: np.ndarray  # (n,) bool
    theta_b: np.ndarray  # (n, 6)
    source: list[str]
    adj: dict[int, dict[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        self._safe_ids = np.flatnonzero(self.safe)

    def __len__(self):
        return len(self.z)

    @property
    def safe_ids(self) -> np.ndarray:
        return self._safe_ids

    def neighbor_lists(self) -> list[tuple[tuple[int, float], ...]]:
        """Adjacency flattened to per-node tuples for the query hot loop (built once, cached)."""
        cached = self.__dict__.get("_nbr_lists")
        if cached is None:
            cached = [tuple(self.adj.get(i, {}).items()) for i in range(len(self.z))]
            self.__dict__["_nbr_lists"] = cached
        return cached

    def neighbors(self, node: int) -> dict[int, float]:
        return self.adj.get(node, {})

    def edges(self):
        for i in sorted(self.adj):
            for j in sorted(self.adj[i]):
                if i < j:
                    yield i, j, self.adj[i][j]

    def n_edges(self) -> int:
        return sum(len(v) for v in self.adj.values()) // 2


@dataclass(frozen=True)
class PathResult:
    nodes: tuple[int, ...]
    weight: float


def graph_from_edges(z, safe, theta_b, source, edges) -> LatentGraph:
    z = np.asarray(z, dtype=float)
    safe = np.asarray(safe, dtype=bool)
    adj: dict[int, dict[int, float]] = {int(i): {} for i in np.flatnonzero(safe)}
    for i, j, w in edges:
        i, j = int(i), int(j)
        if i == j:
            raise GraphBuildError(f"self-loop at node {i}")
        if not (safe[i] and safe[j]):
            raise GraphBuildError(f"edge {i}-{j} touches a colliding node")
        adj[i][j] = float(w)
        adj[j][i] = float(w)
    return LatentGraph(z, safe, np.asarray(theta_b, dtype=float), list(source), adj)


def knn_pairs(z: np.ndarray, ids: np.ndarray, k: int) -> set[tuple[int, int]]:
    """Sorted-id pairs joining each node in ``ids`` to its k nearest within ``ids``.

    An edge exists when either endpoint lists the other, and among equidistant
    candidates the KD-tree's order decides.
    """
    if len(ids) < 2:
        return set()
    pts = z[ids]
    kk = min(k + 1, len(ids))
    _, nbr = cKDTree(pts).query(pts, k=kk)
    nbr = np.atleast_2d(nbr)
    pairs = set()
    for row, neigh in enumerate(nbr):
        neigh = [c for c in neigh.tolist() if c != row][:k]
        for c in neigh:
            a, b = int(ids[row]), int(ids[c])
            pairs.add((min(a, b), max(a, b)))
    return pairs


def roadmap_edges(z: np.ndarray, safe: np.ndarray, n_base: int, k: int):
    """KNN edges over the first ``n_base`` safe nodes, united with KNN edges over all safe nodes.

    Keeping the base edges means extra (synthetic) nodes can only add
    connections, so shortest paths between base nodes never get longer.
    """
    ids = np.flatnonzero(safe)
    return _weighted(z, knn_pairs(z, ids[ids < n_base], k) | knn_pairs(z, ids, k))


def knn_edges(z: np.ndarray, ids: np.ndarray, k: int):
    return _weighted(z, knn_pairs(z, ids, k))


def _weighted(z, pairs):
    out = []
    for a, b in sorted(pairs):
        d = z[a] - z[b]
        out.append((a, b, float(np.sqrt(d @ d))))
    return out


def build_graph(model: VaeModel, dataset: Dataset, k: int = 8, n_synthetic: int = 10_000, seed: int = 0) -> LatentGraph:
    """Embed the corpus, densify with decoder-labelled uniform samples, connect safe nodes by KNN."""
    if k < 1:
        raise ValueError("k must be at least 1")
    x = pose_vectors(dataset)
    z_data = model.embed(x)
    safe_data = x[:, -1] == 1
    lo, hi = z_data.min(axis=0), z_data.max(axis=0)
    rng = np.random.default_rng(seed)
    z_syn = rng.uniform(lo, hi, size=(n_synthetic, z_data.shape[1]))
    safe_syn = classify_latent(model, z_syn) if n_synthetic else np.zeros(0, dtype=bool)
    z = np.vstack([z_data, z_syn])
    safe = np.concatenate([safe_data, safe_syn])
    if not safe.any():
        raise GraphBuildError("no safe nodes to connect")
    theta_b = decode_theta_b(model, z)
    source = ["dataset"] * len(z_data) + ["synthetic"] * n_synthetic
    graph = graph_from_edges(z, safe, theta_b, source, roadmap_edges(z, safe, len(z_data), k))
    log.info("graph: %d nodes (%d safe), %d edges", len(z), safe.sum(), graph.n_edges())
    return graph


def _check_endpoint(graph: LatentGraph, node: int, blacklist) -> None:
    if not 0 <= node < len(graph) or not graph.safe[node]:
        raise ValueError(f"node {node} is not a safe node")
    if node in blacklist:
        raise ValueError(f"node {node} is blacklisted")


def _component_size(graph: LatentGraph, node: int, blacklist) -> int:
    seen = {node}
    todo = deque([node])
    while todo:
        u = todo.popleft()
        for v in graph.adj.get(u, ()):
            if v not in seen and v not in blacklist:
                seen.add(v)
                todo.append(v)
    return len(seen)


def shortest_path(graph: LatentGraph, start: int, goal: int, blacklist=frozenset()) -> PathResult:
    """Dijkstra over safe, non-blacklisted nodes; equal tentative distances pop smaller ids first."""
    _check_endpoint(graph, start, blacklist)
    _check_endpoint(graph, goal, blacklist)
    n = len(graph)
    nbrs = graph.neighbor_lists()
    closed = bytearray(n)  # settled or blacklisted
    for b in blacklist:
        if 0 <= b < n:
            closed[b] = 1
    inf = float("inf")
    dist = [inf] * n
    prev = [-1] * n
    dist[start] = 0.0
    heap = [(0.0, start)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if closed[u]:
            continue
        if u == goal:
            break
        closed[u] = 1
        for v, w in nbrs[u]:
            if closed[v]:
                continue
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                push(heap, (nd, v))
    if dist[goal] == inf:
        raise NoPathError(start, goal, _component_size(graph, start, blacklist), _component_size(graph, goal, blacklist))
    nodes = [goal]
    while nodes[-1] != start:
        nodes.append(prev[nodes[-1]])
    nodes.reverse()
    return PathResult(tuple(nodes), dist[goal])


def replan(graph: LatentGraph, current: int, goal: int, blacklist_additions=(), blacklist=frozenset()) -> PathResult:
    """Shortest path from ``current`` after excluding extra nodes; the graph is untouched."""
    return shortest_path(graph, current, goal, frozenset(blacklist) | frozenset(blacklist_additions))


def nearest_safe_node(graph: LatentGraph, z, candidates=None) -> int:
    """Closest safe node to a latent point (ties go to the smaller id)."""
    ids = graph.safe_ids if candidates is None else np.asarray(sorted(candidates))
    if len(ids) == 0:
        raise ValueError("graph has no safe nodes")
    d = graph.z[ids] - np.asarray(z, dtype=float)
    return int(ids[int(np.argmin(np.einsum("ij,ij->i", d, d)))])


def connected_components(graph: LatentGraph) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for s in graph.safe_ids.tolist():
        if s in seen:
            continue
        comp = {s}
        todo = deque([s])
        while todo:
            u = todo.popleft()
            for v in graph.adj.get(u, ()):
                if v not in comp:
                    comp.add(v)
                    todo.append(v)
        seen |= comp
        comps.append(comp)
    return comps


def largest_component(graph: LatentGraph) -> set[int]:
    comps = connected_components(graph)
    if not comps:
        return set()
    # Ties go to the component found first, i.e. the one holding the smallest id.
    return max(comps, key=len)


# --- persistence -------------------------------------------------------------


def write_graph(graph: LatentGraph, path) -> None:
    nodes = [
        {
            "id": i,
            "z": graph.z[i].tolist(),
            "label": "safe" if graph.safe[i] else "colliding",
            "theta_b": graph.theta_b[i].tolist(),
            "source": graph.source[i],
        }
        for i in range(len(graph))
    ]
    edges = [[i, j, w] for i, j, w in graph.edges()]
    Path(path).write_text(json.dumps({"nodes": nodes, "edges": edges}, separators=(",", ":")) + "\n")


def read_graph(path) -> LatentGraph:
    obj = json.loads(Path(path).read_text())
    nodes = sorted(obj["nodes"], key=lambda n: n["id"])
    if [n["id"] for n in nodes] != list(range(len(nodes))):
        raise ValueError("node ids must be 0..n-1")
    z = np.array([n["z"] for n in nodes], dtype=float).reshape(len(nodes), -1)
    safe = np.array([n["label"] == "safe" for n in nodes])
    theta_b = np.array([n["theta_b"] for n in nodes], dtype=float).reshape(len(nodes), 6)
    return graph_from_edges(z, safe, theta_b, [n["source"] for n in nodes], obj["edges"])


def write_latent_csv(graph: LatentGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "z0", "z1", "label", "source"])
        for i in range(len(graph)):
            w.writerow([i, repr(float(graph.z[i, 0])), repr(float(graph.z[i, 1])),
                        "safe" if graph.safe[i] else "colliding", graph.source[i]])
