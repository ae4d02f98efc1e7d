import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualarm.frames import Transform, axis_angle_rotation
from dualarm.kinematics import (
    JointLimitError,
    KinematicChain,
    forward_kinematics,
    link_to_world_frame,
    link_transform,
    load_chain,
    save_chain,
    world_to_link_frame,
)

angles = arrays(np.float64, 6, elements=st.floats(-np.pi, np.pi))
points = arrays(np.float64, 3, elements=st.floats(-2.0, 2.0))


def oracle_link_matrix(chain, k, q):
    # Independent route: explicit 4x4 homogeneous products, built from raw numbers.
    m = np.eye(4)
    for i in range(k):
        link = chain.links[i]
        off = np.eye(4)
        off[:3, :3] = link.fixed_offset.rotation
        off[:3, 3] = link.fixed_offset.translation
        x, y, z = link.joint_axis
        c, s = np.cos(q[i]), np.sin(q[i])
        C = 1 - c
        rot = np.eye(4)
        rot[:3, :3] = [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
        m = m @ off @ rot
    return m


def test_zero_config_link1_is_fixed_offset(chain_a):
    T = link_transform(chain_a, 1, np.zeros(6))
    assert T.allclose(chain_a.links[0].fixed_offset, atol=0.0)


def test_recurrence(chain_b, rng):
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 6)
        for k in range(2, 7):
            lhs = link_transform(chain_b, k, q)
            rhs = link_transform(chain_b, k - 1, q) @ chain_b.links[k - 1].local_transform(q[k - 1])
            assert lhs.allclose(rhs, atol=0.0)


def test_link6_matches_matrix_oracle(chain_b, rng):
    for _ in range(200):
        q = rng.uniform(-np.pi, np.pi, 6)
        got = link_transform(chain_b, 6, q).matrix()
        assert np.max(np.abs(got - oracle_link_matrix(chain_b, 6, q))) < 1e-12


def test_forward_kinematics_zero_config_is_product_of_offsets(chain_a):
    poses = forward_kinematics(chain_a, np.zeros(6))
    acc = Transform.identity()
    for link, pose in zip(chain_a.links, poses):
        acc = acc @ link.fixed_offset
        assert pose.allclose(acc, atol=1e-15)


def test_last_joint_only_moves_last_link(chain_a, rng):
    q = rng.uniform(-np.pi, np.pi, 6)
    q2 = q.copy()
    q2[5] += 0.3
    p1 = forward_kinematics(chain_a, q)
    p2 = forward_kinematics(chain_a, q2)
    for i in range(5):
        assert p1[i].allclose(p2[i], atol=0.0)
    assert not p1[5].allclose(p2[5], atol=1e-6)


def test_end_effector_matches_oracle(chain_a, rng):
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 6)
        ee = forward_kinematics(chain_a, q)[5].translation
        assert np.max(np.abs(ee - oracle_link_matrix(chain_a, 6, q)[:3, 3])) < 1e-12


@given(angles)
def test_rotation_blocks_orthonormal(q):
    from dualarm.kinematics import default_chain

    chain = default_chain("arm_2")
    for pose in forward_kinematics(chain, q):
        R = pose.rotation
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_link_origin_maps_to_zero(chain_b, rng):
    q = rng.uniform(-np.pi, np.pi, 6)
    for k in range(1, 7):
        origin = link_transform(chain_b, k, q).translation
        assert np.allclose(world_to_link_frame(chain_b, k, q, origin), 0.0, atol=1e-12)
        assert np.allclose(link_to_world_frame(chain_b, k, q, np.zeros(3)), origin, atol=0.0)


@given(angles, points, st.integers(1, 6))
def test_round_trip(q, p, k):
    from dualarm.kinematics import default_chain

    chain = default_chain("arm_1")
    back = link_to_world_frame(chain, k, q, world_to_link_frame(chain, k, q, p))
    assert np.max(np.abs(back - p)) < 1e-9


def test_world_to_link_matches_numeric_inverse(chain_a, rng):
    for _ in range(200):
        q = rng.uniform(-np.pi, np.pi, 6)
        k = int(rng.integers(1, 7))
        p = rng.uniform(-1, 1, 3)
        inv = np.linalg.inv(oracle_link_matrix(chain_a, k, q))
        expected = (inv @ np.append(p, 1.0))[:3]
        assert np.max(np.abs(world_to_link_frame(chain_a, k, q, p) - expected)) < 1e-9


def test_errors(chain_a):
    with pytest.raises(IndexError):
        link_transform(chain_a, 0, np.zeros(6))
    with pytest.raises(IndexError):
        link_transform(chain_a, 7, np.zeros(6))
    with pytest.raises(JointLimitError):
        forward_kinematics(chain_a, np.array([4.0, 0, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        world_to_link_frame(chain_a, 2, np.zeros(6), [np.nan, 0, 0])
    with pytest.raises(ValueError):
        forward_kinematics(chain_a, np.zeros(5))


def test_transform_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Transform(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Transform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_chain_json_round_trip(chain_b, tmp_path):
    path = tmp_path / "chain.json"
    save_chain(chain_b, path)
    again = load_chain(path)
    q = np.linspace(-1, 1, 6)
    for p1, p2 in zip(forward_kinematics(chain_b, q), forward_kinematics(again, q)):
        assert p1.allclose(p2, atol=0.0)


def test_chain_needs_six_links(chain_a):
    with pytest.raises(ValueError):
        KinematicChain(chain_a.links[:5])


def test_default_limits_when_omitted(chain_a):
    obj = chain_a.to_json()
    for link in obj["links"]:
        del link["limits"]
    chain = KinematicChain.from_json(obj)
    assert np.allclose(chain.lower, -np.pi) and np.allclose(chain.upper, np.pi)


def test_rodrigues_is_rotation():
    R = axis_angle_rotation([0, 0, 1], np.pi / 2)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0])
