import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from palmplan import (
    PointCloud,
    RigidTransform,
    SkillType,
    compose,
    invert,
    skill_admits,
    transform_distance,
)
from palmplan.samplers import (
    BaselineSampler,
    DegenerateGeometryError,
    NoTopSurfaceError,
    ReplaySampler,
    SkillParams,
    baseline_grasp_sampler,
    baseline_pull_sampler,
    baseline_push_sampler,
    format_replay_record,
    parse_replay_record,
    register_mask_subgoal,
    write_replay_file,
)
from palmplan.scene import FACES, Cuboid
from palmplan.seeding import derive_rng, derive_seed
from palmplan.simulation import sample_stable_pose, synthesize_cloud
from palmplan.skills import ContactPose

from test_skills import one_palm


def face_down_oracle(obj: Cuboid, face, planar: RigidTransform) -> RigidTransform:
    """Flatten ``face`` onto z=0 by rotating about the same horizontal axis the
    registration initializer uses, then translate to the planar target."""
    n = obj.face_normal_world(face)
    axis = np.cross([0.0, 0.0, 1.0], n)
    if np.linalg.norm(axis) < 0.1:
        axis = np.array([0.0, 1.0, 0.0])
    axis = axis / np.linalg.norm(axis)

    def flatten(v):
        vp = v - axis * (axis @ v)
        return vp / np.linalg.norm(vp)

    u, w = flatten(n), flatten(np.array([0.0, 0.0, -1.0]))
    theta = math.atan2(float(np.cross(u, w) @ axis), float(u @ w))
    center = obj.pose.apply_point(obj.face_center_body(face))
    rotation = RigidTransform.from_axis_angle(axis, theta, point=center)
    moved = rotation.apply_point(center)
    drop = RigidTransform(
        translation=[planar.translation[0], planar.translation[1], -moved[2]]
    )
    return compose(drop, rotation)


def full_cuboid_cloud(obj: Cuboid, per_face=200, seed=0) -> PointCloud:
    rng = np.random.default_rng(seed)
    chunks = [obj.sample_face_points(face, per_face, rng) for face in FACES]
    return PointCloud(np.vstack(chunks))


@pytest.fixture
def standing_cube(scene):
    cube = Cuboid([0.04, 0.04, 0.04])
    pose = RigidTransform(translation=[0.0, -0.08, 0.04])
    return cube.at(pose)


class TestRegisterMaskSubgoal:
    def test_already_registered_identity(self, scene, standing_cube):
        cloud = full_cuboid_cloud(standing_cube)
        mask = standing_cube.face_membership(cloud.points, (2, -1), tol=1e-9)
        # the resting face is part of the sensed support surface
        target = PointCloud(np.vstack([scene.table_cloud().points, cloud.points[mask]]))
        out = register_mask_subgoal(cloud, mask, target, RigidTransform(), pitch_init=False)
        pos, rot = transform_distance(out, RigidTransform())
        assert pos < 1e-6 and rot < 1e-6

    def test_side_face_lands_flat(self, scene, standing_cube):
        cloud = synthesize_cloud(scene, standing_cube, 1500, seed=3)
        face = (0, 1)
        mask = standing_cube.face_membership(cloud.points, face, tol=1e-9)
        planar = RigidTransform(translation=[0.03, -0.02, 0.0])
        out = register_mask_subgoal(cloud, mask, scene.table_cloud(), planar)
        moved = out.apply_points(cloud.points)
        assert np.abs(moved[mask][:, 2]).max() < 0.005
        assert moved[:, 2].min() > -0.005
        oracle = face_down_oracle(standing_cube, face, planar)
        pos, rot = transform_distance(out, oracle)
        assert pos < 0.03 and rot < math.radians(20)

    def test_shelf_target(self, scene_with_shelf, standing_cube):
        scene = scene_with_shelf
        cloud = synthesize_cloud(scene, standing_cube, 1500, seed=3)
        mask = standing_cube.face_membership(cloud.points, (1, -1), tol=1e-9)
        planar = RigidTransform(translation=[0.0, 0.30, 0.0])
        out = register_mask_subgoal(cloud, mask, scene.shelf_cloud(), planar)
        moved = out.apply_points(cloud.points[mask])
        assert np.abs(moved[:, 2] - scene.shelf.height).max() < 0.005

    def test_small_mask_rejected(self, scene, standing_cube):
        cloud = full_cuboid_cloud(standing_cube)
        mask = np.zeros(len(cloud), bool)
        mask[:5] = True
        with pytest.raises(ValueError, match=">= 10"):
            register_mask_subgoal(cloud, mask, scene.table_cloud(), RigidTransform())


@pytest.fixture(scope="session")
def scene_with_shelf():
    from palmplan import default_scene

    return default_scene(shelf_height=0.3)


class TestBaselineGraspSampler:
    def draw(self, scene, obj, seed, per=1500):
        cloud = synthesize_cloud(scene, obj, per, seed=derive_seed(seed, "cloud"))
        sampler = BaselineSampler()
        cloud = sampler.begin_session(cloud, scene, derive_seed(seed, "session"))
        return cloud, sampler.draw(SkillType.GRASP_REORIENT, cloud, scene, seed)

    def test_contacts_on_opposing_faces(self, scene, standing_cube):
        hits = 0
        for seed in range(6):
            cloud, params = self.draw(scene, standing_cube, seed)
            faces = []
            for pose in (params.contact.left, params.contact.right):
                for face in FACES:
                    if standing_cube.face_membership(
                        pose.translation[None, :], face, tol=2e-3
                    )[0]:
                        faces.append(face)
                        break
            if len(faces) == 2:
                axis_l, sign_l = faces[0]
                axis_r, sign_r = faces[1]
                assert axis_l == axis_r and sign_l == -sign_r
                hits += 1
            dot = float(params.contact.left_normal @ params.contact.right_normal)
            assert dot <= math.cos(math.pi - math.radians(20))
        assert hits >= 4  # refined contacts sit on faces almost always

    def test_registration_plane_excluded_from_contacts(self, scene, standing_cube):
        # find a draw whose mask is the top face, then check contacts avoid
        # both the top and the (invisible) bottom
        found = 0
        for seed in range(40):
            try:
                cloud, params = self.draw(scene, standing_cube, seed)
            except Exception:
                continue
            masked = cloud.points[params.mask]
            if np.mean(np.abs(masked[:, 2] - 0.08) < 2e-3) > 0.9:  # top face mask
                found += 1
                for pose in (params.contact.left, params.contact.right):
                    z = pose.translation[2]
                    assert 0.002 < z < 0.078
                if found >= 3:
                    return
        assert found > 0, "no draw selected the top face as registration plane"

    def test_antipodal_segment_through_hull(self, scene, standing_cube):
        cloud, params = self.draw(scene, standing_cube, 3)
        hull = ConvexHull(cloud.points)
        mid = 0.5 * (params.contact.left.translation + params.contact.right.translation)
        # hull membership: every face plane keeps the midpoint inside
        ok = np.all(hull.equations[:, :3] @ mid + hull.equations[:, 3] <= 1e-9)
        assert ok

    def test_deterministic_per_seed(self, scene, standing_cube):
        _, a = self.draw(scene, standing_cube, 7)
        _, b = self.draw(scene, standing_cube, 7)
        assert transform_distance(a.subgoal, b.subgoal) == (0, 0)
        np.testing.assert_array_equal(
            a.contact.left.translation, b.contact.left.translation
        )
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_distinct_seeds_distinct_samples(self, scene, standing_cube):
        cloud = synthesize_cloud(scene, standing_cube, 1500, seed=1)
        sampler = BaselineSampler()
        cloud = sampler.begin_session(cloud, scene, 0)
        seen = set()
        for seed in range(100):
            params = sampler.draw(SkillType.GRASP_REORIENT, cloud, scene, seed)
            seen.add(tuple(np.round(params.subgoal.as_vector(), 12)))
        assert len(seen) >= 99

    def test_mask_lands_on_support(self, scene, standing_cube):
        cloud, params = self.draw(scene, standing_cube, 11)
        moved = params.subgoal.apply_points(cloud.points[params.mask])
        assert abs(moved[:, 2].min()) < 0.005

    def test_degenerate_geometry_rejected(self, scene):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.05, 0.05, (300, 3))
        pts[:, 2] = 0.02
        flat = PointCloud(pts + np.array([0.0, -0.1, 0.0]))
        with pytest.raises(DegenerateGeometryError, match="degenerate geometry"):
            baseline_grasp_sampler(flat, scene, 0)


class TestBaselinePullSampler:
    def test_contact_on_top_surface(self, scene):
        obj = Cuboid([0.05, 0.03, 0.02]).at(RigidTransform(translation=[0.0, -0.1, 0.02]))
        cloud = synthesize_cloud(scene, obj, 1500, seed=2)
        params = baseline_pull_sampler(cloud, scene, 4)
        assert abs(params.contact.right.translation[2] - 0.04) < 0.005
        np.testing.assert_allclose(params.contact.right_normal, [0, 0, -1.0], atol=1e-9)

    def test_subgoal_admissible_and_on_table(self, scene):
        obj = Cuboid([0.05, 0.03, 0.02]).at(RigidTransform(translation=[0.0, -0.1, 0.02]))
        cloud = synthesize_cloud(scene, obj, 1500, seed=2)
        for seed in range(20):
            params = baseline_pull_sampler(cloud, scene, seed)
            assert skill_admits(SkillType.PULL_RIGHT, params.subgoal)
            moved_centroid = params.subgoal.apply_point(cloud.centroid())
            assert scene.table.contains(moved_centroid[:2])

    def test_left_arm_variant(self, scene):
        obj = Cuboid([0.05, 0.03, 0.02]).at(RigidTransform(translation=[0.0, -0.1, 0.02]))
        cloud = synthesize_cloud(scene, obj, 1500, seed=2)
        params = baseline_pull_sampler(cloud, scene, 4, skill=SkillType.PULL_LEFT)
        assert params.contact.left is not None and params.contact.right is None

    def test_no_top_surface_error(self, scene):
        # vertical strip: all normals horizontal
        rng = np.random.default_rng(1)
        pts = np.column_stack(
            [np.zeros(200), rng.uniform(-0.05, 0.05, 200), rng.uniform(0.01, 0.1, 200)]
        )
        with pytest.raises(NoTopSurfaceError, match="no top surface"):
            baseline_pull_sampler(PointCloud(pts), scene, 0)


class TestBaselinePushSampler:
    def test_contact_opposes_push_direction(self, scene):
        obj = Cuboid([0.04, 0.04, 0.03]).at(RigidTransform(translation=[0.0, -0.1, 0.03]))
        cloud = synthesize_cloud(scene, obj, 1500, seed=5)
        for seed in range(10):
            params = baseline_push_sampler(cloud, scene, seed)
            assert skill_admits(SkillType.PUSH_RIGHT, params.subgoal)
            direction = params.subgoal.apply_point(cloud.centroid()) - cloud.centroid()
            if np.linalg.norm(direction[:2]) < 1e-6:
                continue
            direction = direction[:2] / np.linalg.norm(direction[:2])
            # the palm normal already points into the object
            inward = params.contact.right_normal[:2]
            inward = inward / np.linalg.norm(inward)
            angle = math.acos(min(1.0, max(-1.0, float(direction @ inward))))
            assert angle <= math.radians(30) + 1e-6

    def test_contact_on_side_face(self, scene):
        obj = Cuboid([0.04, 0.04, 0.03]).at(RigidTransform(translation=[0.0, -0.1, 0.03]))
        cloud = synthesize_cloud(scene, obj, 1500, seed=5)
        params = baseline_push_sampler(cloud, scene, 3)
        assert abs(params.contact.right_normal[2]) < 0.6


class TestReplay:
    def make_params(self, bimanual=True):
        subgoal = RigidTransform.from_axis_angle([0, 1, 0], 0.5, point=[0.1, 0.0, 0.05])
        left = one_palm("left", (-0.05, 0, 0.04), (1, 0, 0)).left
        right = one_palm("right", (0.05, 0, 0.04), (-1, 0, 0)).right
        contact = ContactPose(left=left, right=right) if bimanual else ContactPose(right=right)
        mask = np.zeros(60, bool)
        mask[[3, 7, 21]] = True
        return SkillParams(subgoal, contact, mask if bimanual else None)

    def test_record_round_trip(self):
        params = self.make_params()
        line = format_replay_record(SkillType.GRASP_REORIENT, params)
        skill, subgoal, parts = parse_replay_record(line)
        assert skill is SkillType.GRASP_REORIENT
        assert transform_distance(subgoal, params.subgoal) == (0, 0)
        assert transform_distance(parts["left"], params.contact.left) == (0, 0)
        assert transform_distance(parts["right"], params.contact.right) == (0, 0)
        np.testing.assert_array_equal(parts["mask_indices"], [3, 7, 21])

    def test_single_arm_record(self):
        params = self.make_params(bimanual=False)
        line = format_replay_record(SkillType.PULL_RIGHT, params)
        _, _, parts = parse_replay_record(line)
        assert parts["left"] is None and parts["right"] is not None

    def test_sampler_draw_by_seed(self, scene, tmp_path, rng):
        records = [(SkillType.PULL_RIGHT, self.make_params(bimanual=False)) for _ in range(3)]
        path = tmp_path / "replay.txt"
        write_replay_file(path, records)
        sampler = ReplaySampler.from_file(path)
        cloud = PointCloud(rng.uniform(-0.05, 0.05, (80, 3)))
        a = sampler.draw(SkillType.PULL_RIGHT, cloud, scene, 1)
        b = sampler.draw(SkillType.PULL_RIGHT, cloud, scene, 1)
        assert transform_distance(a.subgoal, b.subgoal) == (0, 0)
        with pytest.raises(Exception, match="no replay records"):
            sampler.draw(SkillType.PUSH_LEFT, cloud, scene, 0)

    def test_mask_reconstructed_over_cloud(self, scene, tmp_path, rng):
        records = [(SkillType.GRASP_REORIENT, self.make_params())]
        path = tmp_path / "replay.txt"
        write_replay_file(path, records)
        sampler = ReplaySampler.from_file(path)
        cloud = PointCloud(rng.uniform(-0.05, 0.05, (60, 3)))
        params = sampler.draw(SkillType.GRASP_REORIENT, cloud, scene, 0)
        assert params.mask.sum() == 3 and params.mask[3] and params.mask[7] and params.mask[21]
