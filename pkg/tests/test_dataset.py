import numpy as np
import pytest

from dualarm.dataset import (
    COLLIDED,
    SAFE,
    Dataset,
    DatasetFormatError,
    generate_dataset,
    read_dataset,
    sample_random_config,
    write_dataset,
)
from dualarm.geometry import arm_pair_proximity, collides, posed_boxes, point_box_distance
from dualarm.kinematics import KinematicChain


@pytest.fixture(scope="module")
def small_ds(chain_a, chain_b):
    return generate_dataset(chain_a, chain_b, 400, seed=3)


def test_degenerate_limits_give_zero_config(chain_a):
    obj = chain_a.to_json()
    for link in obj["links"]:
        link["limits"] = [0.0, 0.0]
    chain = KinematicChain.from_json(obj)
    assert np.array_equal(sample_random_config(chain, np.random.default_rng(0)), np.zeros(6))


def test_uniform_mean(chain_a):
    rng = np.random.default_rng(1)
    n = 100_000
    draws = np.array([sample_random_config(chain_a, rng)[0] for _ in range(n)])
    sigma = np.pi / np.sqrt(3) / np.sqrt(n)
    assert abs(draws.mean()) < 3 * sigma


def test_same_seed_same_config(chain_a):
    a = sample_random_config(chain_a, np.random.default_rng(42))
    b = sample_random_config(chain_a, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_far_apart_single_sample_is_safe(chain_a, far_chain_b):
    ds = generate_dataset(chain_a, far_chain_b, 1, seed=0)
    assert ds.samples[0].flag == SAFE and ds.samples[0].collisions == []


def test_collision_fraction_in_open_interval(small_ds):
    frac = small_ds.collision_fraction()
    assert 0.0 < frac < 1.0


def test_flags_replay(small_ds, chain_a, chain_b):
    for s in small_ds.samples:
        assert (s.flag == COLLIDED) == collides(chain_a, s.theta_a, chain_b, s.theta_b, 0.0)
        assert (s.flag == COLLIDED) == bool(s.collisions)


def test_collided_samples_have_zero_proximity(small_ds, chain_a, chain_b):
    for s in small_ds.samples:
        if s.flag == COLLIDED:
            assert arm_pair_proximity(chain_a, s.theta_a, chain_b, s.theta_b).distance == 0.0


def test_contact_points_on_arm_b_surface(small_ds, chain_b):
    for s in small_ds.samples:
        boxes = posed_boxes(chain_b, s.theta_b)
        for link, p in s.collisions:
            box = boxes[link - 1]
            local = np.abs(box.to_local(p))
            assert point_box_distance(p, box) < 1e-9
            assert np.min(box.half_extents - local) < 1e-9


def test_round_trip(small_ds, tmp_path):
    path = tmp_path / "ds.jsonl"
    write_dataset(small_ds, path)
    assert read_dataset(path).same_as(small_ds)


def test_empty_round_trip(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_dataset(Dataset([]), path)
    assert path.read_text() == ""
    assert len(read_dataset(path)) == 0


def test_truncated_line_reports_line_number(small_ds, tmp_path):
    path = tmp_path / "ds.jsonl"
    sub = Dataset(small_ds.samples[:5])
    write_dataset(sub, path)
    text = path.read_text()
    path.write_text(text[: len(text) - 20])
    with pytest.raises(DatasetFormatError, match="line 5"):
        read_dataset(path)


def test_byte_determinism(chain_a, chain_b, tmp_path):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(generate_dataset(chain_a, chain_b, 50, seed=11), p1)
    write_dataset(generate_dataset(chain_a, chain_b, 50, seed=11), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_zero_samples(chain_a, chain_b):
    with pytest.raises(ValueError):
        generate_dataset(chain_a, chain_b, 0, seed=1)
