import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dualarm.dataset import Dataset, Sample, generate_dataset
from dualarm.kinematics import world_to_link_frame
from dualarm.sensors import (
    FACE_AXES,
    FACES,
    FaceHit,
    InsufficientHits,
    face_extents,
    face_histogram,
    face_point_world,
    optimal_placement,
    place_sensors,
    read_placement,
    tag_collision_points,
    write_placement,
)


def hits_at(uv, link=3, face="+Z"):
    return [FaceHit(link, face, (float(u), float(v))) for u, v in uv]


def contact_sample(theta_b, link, p_world):
    return Sample(np.zeros(6), theta_b, 0, [(link, p_world)])


def test_face_center_hit(chain_b):
    q = np.array([0.3, -0.4, 1.0, 0.2, -0.7, 0.5])
    p = face_point_world(chain_b, q, 3, "+Z", (0.0, 0.0))
    hits, rejected = tag_collision_points(Dataset([contact_sample(q, 3, p)]), chain_b)
    assert rejected == 0
    assert hits == [FaceHit(3, "+Z", (pytest.approx(0.0, abs=1e-12), pytest.approx(0.0, abs=1e-12)))]


def test_round_trip_known_face(chain_b, rng):
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 6)
        link = int(rng.integers(2, 7))
        face = FACES[rng.integers(6)]
        hu, hv = face_extents(chain_b, link, face)
        uv = (rng.uniform(-0.9, 0.9) * hu, rng.uniform(-0.9, 0.9) * hv)
        p = face_point_world(chain_b, q, link, face, uv)
        (hit,), _ = tag_collision_points(Dataset([contact_sample(q, link, p)]), chain_b)
        assert (hit.link, hit.face) == (link, face)
        assert np.allclose(hit.uv, uv, atol=1e-9, rtol=0)


def plane_oracle(p_box, h):
    # Independent: distance to the six infinite face planes, restricted to points
    # whose in-plane projection falls inside the face.
    best, best_d = None, np.inf
    for face, (axis, sign, u, v) in FACE_AXES.items():
        if abs(p_box[u]) <= h[u] + 1e-12 and abs(p_box[v]) <= h[v] + 1e-12:
            d = abs(p_box[axis] - sign * h[axis])
            if d < best_d:
                best, best_d = face, d
    return best


def test_bulk_assignment_matches_plane_oracle(chain_b):
    rng = np.random.default_rng(4)
    samples, truth = [], []
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 6)
        link = int(rng.integers(2, 7))
        face = FACES[rng.integers(6)]
        hu, hv = face_extents(chain_b, link, face)
        uv = (rng.uniform(-0.95, 0.95) * hu, rng.uniform(-0.95, 0.95) * hv)
        samples.append(contact_sample(q, link, face_point_world(chain_b, q, link, face, uv)))
        truth.append((link, face))
    hits, rejected = tag_collision_points(Dataset(samples), chain_b)
    assert rejected == 0
    for s, hit, (link, face) in zip(samples, hits, truth):
        geom = chain_b.links[link - 1].geometry
        p_box = geom.frame_offset.apply_inverse(world_to_link_frame(chain_b, link, s.theta_b, s.collisions[0][1]))
        assert hit.face == face == plane_oracle(p_box, geom.half_extents)


def test_far_point_rejected(chain_b):
    q = np.zeros(6)
    p = face_point_world(chain_b, q, 4, "+X", (0.0, 0.0))
    p_off = p + 0.01 * (p - face_point_world(chain_b, q, 4, "-X", (0.0, 0.0)))
    hits, rejected = tag_collision_points(Dataset([contact_sample(q, 4, p_off)]), chain_b)
    assert hits == [] and rejected == 1


def test_symmetric_pair_gives_center():
    p = optimal_placement(hits_at([(1, 1), (-1, -1)]), 3, "+Z", (2.0, 2.0), min_hits=2)
    assert p.uv == (0.0, 0.0) and p.n_hits == 2


def test_single_point_cloud():
    p = optimal_placement(hits_at([(0.3, -0.2)] * 40), 3, "+Z", (1.0, 1.0))
    assert p.uv == pytest.approx((0.3, -0.2), abs=1e-15)


def test_uniform_cloud_mean_within_3_sigma():
    rng = np.random.default_rng(8)
    a, b, n = 0.2, 0.1, 10_000
    # Face coordinates are centred; a cloud on [0, a] x [0, b] sits inside a face of half-size (a, b).
    uv = np.column_stack([rng.uniform(0, a, n), rng.uniform(0, b, n)])
    p = optimal_placement(hits_at(uv), 3, "+Z", (a, b))
    assert abs(p.uv[0] - a / 2) < 3 * a / np.sqrt(12 * n)
    assert abs(p.uv[1] - b / 2) < 3 * b / np.sqrt(12 * n)


def test_insufficient_hits():
    with pytest.raises(InsufficientHits):
        optimal_placement(hits_at([(0, 0)] * 5), 3, "+Z", (1.0, 1.0), min_hits=30)


def test_clamped_to_face():
    p = optimal_placement(hits_at([(0.5, 0.0)] * 30), 3, "+Z", (0.1, 0.1))
    assert p.uv == (0.1, 0.0)


@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.integers(0, 1000))
def test_translation_equivariance(du, dv, seed):
    rng = np.random.default_rng(seed)
    uv = rng.uniform(-0.2, 0.2, (40, 2))
    big = (10.0, 10.0)
    p0 = optimal_placement(hits_at(uv), 3, "+Z", big)
    p1 = optimal_placement(hits_at(uv + [du, dv]), 3, "+Z", big)
    assert np.allclose(np.subtract(p1.uv, p0.uv), [du, dv], atol=1e-12)


def test_mean_minimises_mean_squared_distance():
    rng = np.random.default_rng(3)
    uv = rng.uniform(-1, 1, (35, 2)) ** 3
    p = np.array(optimal_placement(hits_at(uv), 3, "+Z", (1.0, 1.0)).uv)
    grid = np.linspace(-1, 1, 201)
    G = np.stack(np.meshgrid(grid, grid), axis=-1).reshape(-1, 2)
    costs = ((G[:, None, :] - uv[None]) ** 2).sum(-1).mean(1)
    assert ((uv - p) ** 2).sum(-1).mean() <= costs.min() + 1e-12


def test_other_statistics():
    uv = np.array([[0.0, 0.0]] * 20 + [[0.9, 0.9]] * 15)
    assert optimal_placement(hits_at(uv), 3, "+Z", (1.0, 1.0), statistic="median").uv == (0.0, 0.0)
    mode = optimal_placement(hits_at(uv), 3, "+Z", (1.0, 1.0), statistic="mode").uv
    assert np.allclose(mode, (0.1, 0.1))


def test_histogram_single_hit():
    counts, _, _ = face_histogram(hits_at([(0.0, 0.0)]), 3, "+Z", (1.0, 1.0), bins=4)
    assert counts.sum() == 1 and np.count_nonzero(counts) == 1


def test_histogram_conservation(rng):
    uv = rng.uniform(-1, 1, (500, 2))
    counts, ue, ve = face_histogram(hits_at(uv), 3, "+Z", (1.0, 1.0), bins=7)
    assert counts.sum() == 500
    assert ue[0] == -1.0 and ue[-1] == 1.0 and ve[0] == -1.0 and ve[-1] == 1.0


def test_histogram_uniform_chi_square():
    rng = np.random.default_rng(21)
    uv = rng.uniform(-1, 1, (10_000, 2))
    counts, _, _ = face_histogram(hits_at(uv), 3, "+Z", (1.0, 1.0), bins=8)
    assert stats.chisquare(counts.ravel()).pvalue > 0.01


def test_histogram_needs_hits():
    with pytest.raises(InsufficientHits):
        face_histogram([], 3, "+Z", (1.0, 1.0))


def test_pipeline_on_generated_data(chain_a, chain_b, tmp_path):
    ds = generate_dataset(chain_a, chain_b, 600, seed=2)
    hits, rejected = tag_collision_points(ds, chain_b)
    assert rejected == 0 and hits
    placements, skipped = place_sensors(hits, chain_b, min_hits=5)
    assert placements
    for p in placements:
        hu, hv = face_extents(chain_b, p.link, p.face)
        assert abs(p.uv[0]) <= hu and abs(p.uv[1]) <= hv
    path = tmp_path / "placement.json"
    write_placement(placements, path)
    assert read_placement(path) == placements
