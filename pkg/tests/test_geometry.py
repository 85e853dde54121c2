import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from palmplan import (
    CenteredCloud,
    PointCloud,
    RigidTransform,
    apply,
    center_and_augment,
    compose,
    compose_sequence,
    downsample_uniform,
    interpolate_screw,
    invert,
    project_se2,
    transform_distance,
)
from palmplan.geometry import (
    quat_angle_between,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_to_matrix,
    yaw_of_quat,
)

from conftest import random_cloud, random_transform

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def transforms(max_translation=1.0):
    return st.builds(
        lambda w, x, y, z, tx, ty, tz: RigidTransform([w, x, y, z], [tx, ty, tz]),
        *(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3) for _ in range(4)),
        *(st.floats(-max_translation, max_translation) for _ in range(3)),
    )


# ---------------------------------------------------------------------------
# 4x4 homogeneous matrix oracle
# ---------------------------------------------------------------------------

def matrix_compose_oracle(a: RigidTransform, b: RigidTransform) -> np.ndarray:
    return a.matrix() @ b.matrix()


def matrix_apply_oracle(t: RigidTransform, points: np.ndarray) -> np.ndarray:
    homog = np.hstack([points, np.ones((len(points), 1))])
    return (t.matrix() @ homog.T).T[:, :3]


def matrix_distance(m: np.ndarray, t: RigidTransform) -> float:
    return float(np.abs(m - t.matrix()).max())


class TestRigidTransform:
    def test_quaternion_normalized_and_canonical(self, rng):
        for _ in range(100):
            t = random_transform(rng)
            assert abs(np.linalg.norm(t.rotation) - 1.0) < 1e-9
            assert t.rotation[0] >= 0.0

    def test_compose_identity(self, rng):
        t = random_transform(rng)
        assert transform_distance(compose(RigidTransform.identity(), t), t) == (0, 0)

    def test_compose_inverse_is_identity(self, rng):
        for _ in range(50):
            t = random_transform(rng)
            assert compose(t, invert(t)).is_identity(1e-9, 1e-9)
            assert compose(invert(t), t).is_identity(1e-9, 1e-9)

    def test_compose_matches_matrix_oracle(self, rng):
        for _ in range(200):
            a, b = random_transform(rng), random_transform(rng)
            assert matrix_distance(matrix_compose_oracle(a, b), compose(a, b)) < 1e-9

    def test_invert_matches_matrix_oracle(self, rng):
        for _ in range(200):
            t = random_transform(rng)
            assert matrix_distance(np.linalg.inv(t.matrix()), invert(t)) < 1e-9

    def test_matrix_round_trip(self, rng):
        t = random_transform(rng)
        back = RigidTransform.from_matrix(t.matrix())
        assert transform_distance(t, back) < (1e-12, 1e-9)

    def test_vector_round_trip(self, rng):
        t = random_transform(rng)
        assert transform_distance(t, RigidTransform.from_vector(t.as_vector())) == (0, 0)

    @given(transforms(), transforms(), transforms())
    def test_associativity(self, a, b, c):
        lhs = compose(compose(a, b), c)
        rhs = compose(a, compose(b, c))
        pos, rot = transform_distance(lhs, rhs)
        assert pos < 1e-9 and rot < 1e-9

    def test_compose_sequence_is_execution_order(self, rng):
        ts = [random_transform(rng) for _ in range(4)]
        expected = compose(ts[3], compose(ts[2], compose(ts[1], ts[0])))
        assert transform_distance(compose_sequence(ts), expected) < (1e-12, 1e-12)


class TestApply:
    def test_identity_is_noop(self, rng):
        cloud = random_cloud(rng)
        out = apply(RigidTransform.identity(), cloud)
        np.testing.assert_array_equal(out.points, cloud.points)

    def test_pure_translation_shifts_x(self, rng):
        cloud = random_cloud(rng)
        out = apply(RigidTransform(IDENTITY_Q, [0.1, 0, 0]), cloud)
        np.testing.assert_allclose(out.points[:, 0], cloud.points[:, 0] + 0.1)
        np.testing.assert_array_equal(out.points[:, 1:], cloud.points[:, 1:])

    def test_matches_matrix_oracle(self, rng):
        cloud = random_cloud(rng, n=100)
        t = random_transform(rng)
        np.testing.assert_allclose(
            apply(t, cloud).points, matrix_apply_oracle(t, cloud.points), atol=1e-9
        )

    def test_normals_rotate_only(self, rng):
        normals = rng.normal(size=(50, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        cloud = PointCloud(rng.uniform(-1, 1, (50, 3)), normals)
        t = random_transform(rng)
        out = apply(t, cloud)
        expected = (quat_to_matrix(t.rotation) @ normals.T).T
        np.testing.assert_allclose(out.normals, expected, atol=1e-9)

    def test_mask_preserved(self, rng):
        mask = rng.uniform(size=40) > 0.5
        cloud = PointCloud(rng.uniform(-1, 1, (40, 3)), mask=mask)
        out = apply(random_transform(rng), cloud)
        np.testing.assert_array_equal(out.mask, mask)

    def test_apply_compose_consistency(self, rng):
        cloud = random_cloud(rng)
        a, b = random_transform(rng), random_transform(rng)
        np.testing.assert_allclose(
            apply(compose(a, b), cloud).points, apply(a, apply(b, cloud)).points, atol=1e-9
        )


class TestProjectSe2:
    def test_already_planar_unchanged(self):
        t = RigidTransform(quat_from_yaw(math.radians(30)), [0.2, -0.1, 0.0])
        pos, rot = transform_distance(project_se2(t), t)
        assert pos < 1e-12 and rot < 1e-12

    def test_pure_pitch_drops_to_identity_rotation(self):
        t = RigidTransform(quat_from_axis_angle([0, 1, 0], math.pi / 2), [0, 0, 0.3])
        out = project_se2(t)
        assert quat_angle_between(out.rotation, IDENTITY_Q) < 1e-9
        assert out.translation[2] == 0.0

    def test_yaw_matches_atan2_oracle(self, rng):
        for _ in range(100):
            t = random_transform(rng)
            r = quat_to_matrix(t.rotation)
            oracle_yaw = math.atan2(r[1, 0], r[0, 0])
            got = yaw_of_quat(project_se2(t).rotation)
            assert abs(math.remainder(got - oracle_yaw, 2 * math.pi)) < 1e-9

    @given(transforms())
    def test_idempotent(self, t):
        once = project_se2(t)
        twice = project_se2(once)
        pos, rot = transform_distance(once, twice)
        assert pos < 1e-12 and rot < 1e-12


class TestCenterAndAugment:
    def test_single_point(self):
        out = center_and_augment(PointCloud([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.rows, [[0, 0, 0, 1, 2, 3]])

    def test_symmetric_pair(self):
        out = center_and_augment(PointCloud([[1.0, 0, 0], [-1.0, 0, 0]]))
        np.testing.assert_allclose(out.centroid, [0, 0, 0])
        np.testing.assert_allclose(out.rows[:, :3], [[1, 0, 0], [-1, 0, 0]])
        np.testing.assert_allclose(out.rows[:, 3:], 0)

    def test_centered_mean_is_zero(self, rng):
        out = center_and_augment(random_cloud(rng, n=100))
        assert np.abs(out.rows[:, :3].mean(axis=0)).max() < 1e-9

    def test_reconstruction(self, rng):
        cloud = random_cloud(rng)
        out = center_and_augment(cloud)
        np.testing.assert_allclose(out.rows[:, :3] + out.centroid, cloud.points, atol=1e-12)

    def test_centroid_column_constant(self, rng):
        out = center_and_augment(random_cloud(rng))
        assert (out.rows[:, 3:] == out.rows[0, 3:]).all()

    def test_rows_must_be_n_by_6(self):
        with pytest.raises(ValueError):
            CenteredCloud(np.zeros((4, 5)), np.zeros(3))


class TestDownsample:
    def test_full_size_is_permutation(self, rng):
        cloud = random_cloud(rng, n=50)
        out = downsample_uniform(cloud, 50, seed=7)
        assert sorted(map(tuple, out.points)) == sorted(map(tuple, cloud.points))

    def test_reproducible_for_fixed_seed(self, rng):
        cloud = random_cloud(rng, n=2000)
        a = downsample_uniform(cloud, 100, seed=3)
        b = downsample_uniform(cloud, 100, seed=3)
        np.testing.assert_array_equal(a.points, b.points)

    def test_distinct_seeds_differ(self, rng):
        cloud = random_cloud(rng, n=2000)
        a = downsample_uniform(cloud, 100, seed=3)
        b = downsample_uniform(cloud, 100, seed=4)
        assert not np.array_equal(a.points, b.points)

    def test_centroid_within_3_sigma(self, rng):
        # finite-population standard error of the sample mean, per axis
        cloud = random_cloud(rng, n=2000)
        n = 100
        pop_var = cloud.points.var(axis=0, ddof=0)
        se2 = pop_var / n * (2000 - n) / (2000 - 1)
        bound = 3.0 * math.sqrt(float(se2.sum()))
        out = downsample_uniform(cloud, n, seed=11)
        assert np.linalg.norm(out.centroid() - cloud.centroid()) < bound

    def test_oversample_with_replacement(self, rng):
        cloud = random_cloud(rng, n=10)
        out = downsample_uniform(cloud, 25, seed=0)
        assert len(out) == 25

    def test_carries_normals_and_mask(self, rng):
        normals = np.tile([0.0, 0.0, 1.0], (30, 1))
        mask = np.arange(30) % 2 == 0
        cloud = PointCloud(rng.uniform(-1, 1, (30, 3)), normals, mask)
        out = downsample_uniform(cloud, 10, seed=5)
        assert out.normals.shape == (10, 3) and out.mask.shape == (10,)

    def test_invalid_count(self, rng):
        with pytest.raises(ValueError):
            downsample_uniform(random_cloud(rng), 0, seed=0)


class TestInterpolateScrew:
    def test_zero_fraction_is_identity(self, rng):
        assert interpolate_screw(random_transform(rng), 0.0).is_identity()

    def test_unit_fraction_is_exact(self, rng):
        t = random_transform(rng)
        assert transform_distance(interpolate_screw(t, 1.0), t) == (0, 0)

    def test_half_composes_to_whole_for_pure_rotations(self, rng):
        for _ in range(50):
            axis = rng.normal(size=3)
            angle = rng.uniform(-math.pi * 0.95, math.pi * 0.95)
            t = RigidTransform(quat_from_axis_angle(axis, angle), np.zeros(3))
            half = interpolate_screw(t, 0.5)
            pos, rot = transform_distance(compose(half, half), t)
            assert pos < 1e-9 and rot < 1e-9

    def test_fractions_compose_for_general_transforms(self, rng):
        for _ in range(50):
            t = random_transform(rng)
            a = interpolate_screw(t, 0.3)
            b = interpolate_screw(t, 0.7)
            pos, rot = transform_distance(compose(b, a), t)
            assert pos < 1e-9 and rot < 1e-9

    def test_pure_translation_is_linear(self):
        t = RigidTransform(IDENTITY_Q, [0.3, -0.2, 0.5])
        out = interpolate_screw(t, 0.25)
        np.testing.assert_allclose(out.translation, [0.075, -0.05, 0.125], atol=1e-12)

    def test_fraction_out_of_range(self, rng):
        with pytest.raises(ValueError):
            interpolate_screw(random_transform(rng), 1.5)


class TestPointCloudValidation:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 3)))

    def test_normal_length_checked(self):
        with pytest.raises(ValueError):
            PointCloud([[0, 0, 0]], normals=[[0, 0, 2.0]])

    def test_mask_shape_checked(self):
        with pytest.raises(ValueError):
            PointCloud([[0, 0, 0]], mask=[True, False])

    def test_points_frozen(self, rng):
        cloud = random_cloud(rng)
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 5.0
