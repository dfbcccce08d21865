"""Arm kinematics: home-pose caching, limits, link rigidity, velocity fields."""

import numpy as np
import pytest

from cloudclear.sim.arm import ArmModel


@pytest.fixture(scope="module")
def arm():
    return ArmModel()


class TestForwardKinematics:
    def test_home_pose_cached_exactly(self, arm):
        pose = arm.fk(arm.home_q)
        assert np.array_equal(pose.joint_positions, arm.home_pose.joint_positions)
        assert np.array_equal(pose.ee_quat, arm.home_pose.ee_quat)

    def test_deterministic(self, arm):
        q = np.array([0.1, -0.4, 0.9, 1.2, -0.3, 0.5])
        p1 = arm.fk(q)
        p2 = arm.fk(q)
        assert np.array_equal(p1.joint_positions, p2.joint_positions)

    def test_batched_matches_single(self, arm):
        rng = np.random.default_rng(0)
        qs = rng.uniform(-1.5, 1.5, size=(10, 6))
        batch = arm.fk(qs)
        for i in range(10):
            single = arm.fk(qs[i])
            assert np.array_equal(single.joint_positions[0], batch.joint_positions[i])

    def test_link_lengths_rigid_under_motion(self, arm):
        """Capsule segment lengths never change with configuration."""
        rng = np.random.default_rng(1)
        ref = None
        for _ in range(20):
            pose = arm.fk(rng.uniform(-2, 2, size=6))
            starts, ends = pose.link_segments()
            lengths = np.linalg.norm(ends - starts, axis=-1)[0]
            if ref is None:
                ref = lengths
            assert np.allclose(lengths, ref, atol=1e-12)

    def test_ee_quat_unit_norm(self, arm):
        rng = np.random.default_rng(2)
        pose = arm.fk(rng.uniform(-2, 2, size=(50, 6)))
        assert np.allclose(np.linalg.norm(pose.ee_quat, axis=1), 1.0, atol=1e-12)

    def test_base_joint_position_fixed(self, arm):
        """Joint 1's origin never moves, whatever the configuration."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            pose = arm.fk(rng.uniform(-2, 2, size=6))
            assert np.allclose(pose.joint_positions[0, 0],
                               arm.base_position + [0, 0, 0.12], atol=1e-12)

    def test_first_joint_spins_ee_around_base_axis(self, arm):
        """Rotating joint 1 only preserves the EE distance to the base z axis."""
        q = arm.home_q.copy()
        radii = []
        for a in np.linspace(-1.0, 1.0, 7):
            q2 = q.copy()
            q2[0] = a
            ee = arm.fk(q2).joint_positions[0, 6]
            radii.append(np.hypot(ee[0] - arm.base_position[0], ee[1] - arm.base_position[1]))
        assert np.allclose(radii, radii[0], atol=1e-12)

    def test_ee_within_reach(self, arm):
        rng = np.random.default_rng(4)
        pose = arm.fk(rng.uniform(-2.5, 2.5, size=(100, 6)))
        d = np.linalg.norm(pose.joint_positions[:, 6] - arm.base_position, axis=1)
        assert np.all(d <= arm.reach + 1e-9)


class TestLimits:
    def test_clamp_q(self, arm):
        q = np.full(6, 10.0)
        assert np.array_equal(arm.clamp_q(q), arm.position_limits[:, 1])

    def test_clamp_qdot(self, arm):
        qd = np.array([5.0, -5.0, 0.1, 0, 0, 0])
        clamped = arm.clamp_qdot(qd)
        assert clamped[0] == arm.velocity_limit
        assert clamped[1] == -arm.velocity_limit
        assert clamped[2] == 0.1

    def test_invalid_model_rejected(self):
        with pytest.raises(ValueError):
            ArmModel(velocity_limit=0.0)
        with pytest.raises(ValueError):
            ArmModel(position_limits=np.tile([1.0, -1.0], (6, 1)))


class TestVelocityFields:
    def test_finite_difference_agreement(self, arm):
        """W x x + B matches the finite-difference motion of link points."""
        rng = np.random.default_rng(5)
        q = rng.uniform(-1, 1, size=6)
        qdot = rng.uniform(-1, 1, size=6)
        eps = 1e-7
        pose = arm.fk(q)
        pose2 = arm.fk(q + eps * qdot)
        W, B = arm.link_point_velocity_fields(pose, qdot)
        # probe each link's far endpoint
        starts, ends = pose.link_segments()
        starts2, ends2 = pose2.link_segments()
        v_fd = (ends2 - ends) / eps
        v_an = np.cross(W, ends) + B
        assert np.abs(v_an - v_fd).max() <= 1e-5

    def test_zero_velocity_gives_zero_field(self, arm):
        pose = arm.fk(arm.home_q)
        W, B = arm.link_point_velocity_fields(pose, np.zeros(6))
        assert np.all(W == 0) and np.all(B == 0)
