"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Criteria 4, 7 and 8 train and benchmark on the shipped default configuration
and take several minutes; the rest run in seconds.
"""

import json
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from sklearn.linear_model import LogisticRegression

from dualarm.dataset import Dataset, generate_dataset, read_dataset
from dualarm.frames import Transform
from dualarm.geometry import min_distance_obb
from dualarm.kinematics import link_to_world_frame, world_to_link_frame
from dualarm.pipeline import episode_inputs, episodes_for, load_config, run_batch, run_stage, summarize
from dualarm.reactive import replay_is_collision_free
from dualarm.roadmap import NoPathError, replan, shortest_path
from dualarm.sensors import FACES, face_extents, face_point_world, optimal_placement, tag_collision_points
from dualarm.vae import VaeModel, classify_latent, load_model, pose_vectors
from test_geometry import random_box, sampling_distance
from test_kinematics import oracle_link_matrix
from test_roadmap import bellman_ford, check_path, random_graph
from test_sensors import contact_sample, hits_at
from test_vae import finite_difference_check, random_x

BUILD_STAGES = ["gen-data", "place-sensors", "train-vae", "build-graph"]
DETERMINISM_EPISODES = 20


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def build(out):
    cfg = load_config()
    t0 = time.perf_counter()
    for stage in BUILD_STAGES:
        run_stage(stage, cfg, out)
    return cfg, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default_run")
    cfg, elapsed = build(out)
    return cfg, out, elapsed


def test_criterion_1_transforms(chain_a, chain_b, capsys):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    round_trip = inverse = 0.0
    for i in range(1000):
        chain = chain_a if i % 2 else chain_b
        q = rng.uniform(-np.pi, np.pi, 6)
        k = int(rng.integers(1, 7))
        p = rng.uniform(-1, 1, 3)
        local = world_to_link_frame(chain, k, q, p)
        round_trip = max(round_trip, float(np.max(np.abs(link_to_world_frame(chain, k, q, local) - p))))
        expected = (np.linalg.inv(oracle_link_matrix(chain, k, q)) @ np.append(p, 1.0))[:3]
        inverse = max(inverse, float(np.max(np.abs(local - expected))))
    elapsed = time.perf_counter() - t0
    ok = round_trip < 1e-9 and inverse < 1e-9 and elapsed < 1.0
    verdict(capsys, 1, "transform correctness", ok,
            f"round trip {round_trip:.1e}, inverse oracle {inverse:.1e}, {elapsed:.2f} s")


def test_criterion_2_collision_distance(capsys):
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst_gap = worst_sym = worst_rigid = 0.0
    below_oracle = True
    for _ in range(500):
        a, b = random_box(rng), random_box(rng)
        d = min_distance_obb(a, b).distance
        oracle, step = sampling_distance(a, b, slack=2.0)
        below_oracle &= d <= oracle + 1e-9
        worst_gap = max(worst_gap, (oracle - d) / (2 * step))  # inf if beyond the bound
        worst_sym = max(worst_sym, abs(d - min_distance_obb(b, a).distance))
        tf = Transform(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-5, 5, 3))
        worst_rigid = max(worst_rigid, abs(d - min_distance_obb(a.transformed(tf), b.transformed(tf)).distance))
    elapsed = time.perf_counter() - t0
    ok = below_oracle and worst_gap <= 1.0 and worst_sym < 1e-9 and worst_rigid < 1e-9 and elapsed < 30
    verdict(capsys, 2, "collision distance", ok,
            f"max oracle gap {worst_gap:.2f} x (2 x spacing), symmetry {worst_sym:.1e}, "
            f"rigid {worst_rigid:.1e}, {elapsed:.1f} s")


def test_criterion_3_vae_gradients(capsys):
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    m = VaeModel.init(seed=9, hidden=(4, 3), beta=0.3, flag_weight=5.0, arm_a_weight=0.1)
    x = random_x(rng, 8)
    worst = finite_difference_check(m, x, rng.standard_normal((8, 2)))
    elapsed = time.perf_counter() - t0
    verdict(capsys, 3, "VAE gradient check", worst < 1e-4 and elapsed < 10,
            f"max relative error {worst:.1e} over {sum(p.size for p in m.parameters())} parameters, {elapsed:.2f} s")


def test_criterion_4_latent_separability(default_run, chain_a, chain_b, capsys):
    cfg, out, elapsed = default_run
    train_ds = read_dataset(out / "dataset.jsonl")
    model = load_model(out / "model.json")
    held_out = generate_dataset(chain_a, chain_b, 2000, seed=cfg.seed + 1000)
    mu_train, _ = model.encode(pose_vectors(train_ds))
    mu_test, _ = model.encode(pose_vectors(held_out))
    y_test = held_out.flags().astype(bool)
    logistic = LogisticRegression().fit(mu_train, train_ds.flags()).score(mu_test, y_test)
    decoder = float(np.mean(classify_latent(model, mu_test) == y_test))
    ok = len(train_ds) == 10_000 and logistic >= 0.85 and decoder >= 0.85 and elapsed < 600
    verdict(capsys, 4, "latent separability", ok,
            f"held-out accuracy logistic {logistic:.3f}, decoder {decoder:.3f}; "
            f"corpus {len(train_ds)}, build {elapsed:.0f} s")


def test_criterion_5_dijkstra_optimality(capsys):
    rng = np.random.default_rng(105)
    t0 = time.perf_counter()
    checked = mismatches = 0
    for _ in range(200):
        g, edges, n = random_graph(rng)
        start = int(rng.integers(n))
        oracle = bellman_ford(n, edges, start)
        for goal in range(n):
            checked += 1
            try:
                res = shortest_path(g, start, goal)
                check_path(g, res)
                mismatches += res.weight != oracle[goal]
            except NoPathError:
                mismatches += not np.isinf(oracle[goal])
        goal = int(rng.integers(n))
        blacklist = {int(v) for v in rng.choice(n, int(rng.integers(0, n // 2 + 1)), replace=False)} - {start, goal}
        kept = [(i, j, w) for i, j, w in edges if i not in blacklist and j not in blacklist]
        expected = bellman_ford(n, kept, start)[goal]
        checked += 1
        try:
            res = replan(g, start, goal, blacklist)
            check_path(g, res, blacklist)
            mismatches += res.weight != expected
        except NoPathError:
            mismatches += not np.isinf(expected)
    elapsed = time.perf_counter() - t0
    verdict(capsys, 5, "Dijkstra optimality", mismatches == 0 and elapsed < 30,
            f"{mismatches} mismatches in {checked} queries, {elapsed:.1f} s")


def test_criterion_6_sensor_placement(chain_b, capsys):
    rng = np.random.default_rng(106)
    t0 = time.perf_counter()
    a, b, n = 0.2, 0.1, 10_000
    uv = np.column_stack([rng.uniform(0, a, n), rng.uniform(0, b, n)])
    p = optimal_placement(hits_at(uv), 3, "+Z", (a, b))
    uniform_ok = abs(p.uv[0] - a / 2) < 3 * a / np.sqrt(12 * n) and abs(p.uv[1] - b / 2) < 3 * b / np.sqrt(12 * n)
    pair = optimal_placement(hits_at([(0.03, -0.01), (-0.03, 0.01)]), 3, "+Z", (0.05, 0.05), min_hits=2)
    pair_ok = pair.uv == (0.0, 0.0)
    samples, truth = [], []
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 6)
        link = int(rng.integers(2, 7))
        face = FACES[rng.integers(6)]
        hu, hv = face_extents(chain_b, link, face)
        uv_true = (rng.uniform(-0.95, 0.95) * hu, rng.uniform(-0.95, 0.95) * hv)
        samples.append(contact_sample(q, link, face_point_world(chain_b, q, link, face, uv_true)))
        truth.append((link, face, uv_true))
    hits, rejected = tag_collision_points(Dataset(samples), chain_b)
    recovered = sum(
        (h.link, h.face) == (link, face) and np.allclose(h.uv, uv_true, atol=1e-9, rtol=0)
        for h, (link, face, uv_true) in zip(hits, truth)
    )
    elapsed = time.perf_counter() - t0
    ok = uniform_ok and pair_ok and rejected == 0 and recovered == len(truth) and elapsed < 10
    verdict(capsys, 6, "sensor placement", ok,
            f"uniform within 3 sigma {uniform_ok}, symmetric pair centred {pair_ok}, "
            f"recovered {recovered}/{len(truth)}, {elapsed:.2f} s")


def test_criterion_7_benchmark(default_run, capsys):
    cfg, out, build_time = default_run
    t0 = time.perf_counter()
    graph, placement, chain_a, chain_b, comp = episode_inputs(cfg, out, "bench")
    lines, ok = [], True
    latencies = []
    for mode, floor in (("A", 95.0), ("B", 85.0)):
        configs = episodes_for(cfg, graph, comp, chain_a, chain_b, mode, 100)
        results = run_batch(graph, placement, chain_a, chain_b, configs, comp)
        m = summarize(results)
        replay_ok = all(replay_is_collision_free(r.trace, chain_a, chain_b) for r in results if r.success)
        latencies += [x for r in results for x in r.replan_latencies]
        reasons = {}
        for r in results:
            if not r.success:
                reasons[r.reason] = reasons.get(r.reason, 0) + 1
        ok &= m["SR"] >= floor and replay_ok and len(results) == 100
        lines.append(f"mode {mode} SR {m['SR']:.0f}% (floor {floor:.0f}%, failures {reasons or 'none'}), "
                     f"T_mean {m['T_mean']:.2f} s, replays clean {replay_ok}")
    median_ms = 1000 * statistics.median(latencies) if latencies else 0.0
    elapsed = build_time + time.perf_counter() - t0
    ok &= median_ms < 100 and elapsed < 1800 and len(graph.z) >= 15_000
    verdict(capsys, 7, "desk-scale benchmark", ok,
            "; ".join(lines) + f"; median replan {median_ms:.1f} ms on {len(graph.z)} nodes; {elapsed:.0f} s total")


def test_criterion_8_determinism(default_run, tmp_path, capsys):
    cfg, first, _ = default_run
    second = tmp_path / "rerun"
    build(second)
    small = replace(cfg, episodes=replace(cfg.episodes, episodes=DETERMINISM_EPISODES))
    for out in (first, second):
        run_stage("run-episodes", small, out)
    names = ["dataset.jsonl", "model.json", "graph.json", "placement.json", "episodes/A/metrics.csv"]
    differing = [n for n in names if (first / n).read_bytes() != (second / n).read_bytes()]
    stages_a = json.loads((first / "manifest.json").read_text())["stages"]
    stages_b = json.loads((second / "manifest.json").read_text())["stages"]
    differing += [s for s in stages_a if stages_a[s]["outputs"] != stages_b[s]["outputs"]]
    verdict(capsys, 8, "determinism", not differing,
            f"full default build twice plus {DETERMINISM_EPISODES} episodes; differing: {differing or 'none'}")
