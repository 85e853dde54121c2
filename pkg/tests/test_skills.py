import math

import numpy as np
import pytest

from palmplan import (
    ContactPose,
    Phase,
    PointCloud,
    RigidTransform,
    SkillType,
    apply,
    compose,
    execute_sticking,
    generate_path,
    interpolate_screw,
    invert,
    project_se2,
    skill_admits,
    transform_distance,
)
from palmplan.geometry import quat_from_axis_angle, quat_from_yaw
from palmplan.skills import (
    APPROACH_STANDOFF,
    ArityError,
    NonPlanarSubgoalError,
    relative_to_contact,
)

from conftest import random_cloud, random_transform

Y_UP_PALM = RigidTransform(quat_from_axis_angle([0, 1, 0], math.pi / 2), [0.05, 0.0, 0.03])


def one_palm(side="right", position=(0.0, 0.0, 0.05), normal=(0.0, 0.0, -1.0)):
    # palm z-axis must equal the palm normal; build a frame around it
    z = np.asarray(normal, float)
    z = z / np.linalg.norm(z)
    seed = np.array([1.0, 0, 0]) if abs(z[0]) < 0.9 else np.array([0, 1.0, 0])
    x = np.cross(seed, z)
    x /= np.linalg.norm(x)
    rot = np.column_stack([x, np.cross(z, x), z])
    pose = RigidTransform.from_rotation_matrix(rot, np.asarray(position, float))
    return ContactPose(left=pose) if side == "left" else ContactPose(right=pose)


def bimanual_contact(gap=0.08, height=0.05):
    left = one_palm("left", (-gap / 2, 0, height), (1.0, 0, 0)).left
    right = one_palm("right", (gap / 2, 0, height), (-1.0, 0, 0)).right
    return ContactPose(left=left, right=right)


class TestContactPose:
    def test_normal_defaults_to_pose_z_axis(self):
        contact = bimanual_contact()
        np.testing.assert_allclose(contact.left_normal, [1, 0, 0], atol=1e-12)
        np.testing.assert_allclose(contact.right_normal, [-1, 0, 0], atol=1e-12)

    def test_requires_some_palm(self):
        with pytest.raises(ArityError):
            ContactPose()

    def test_normal_without_pose_rejected(self):
        with pytest.raises(ArityError):
            ContactPose(right=RigidTransform(), left_normal=[0, 0, 1])


class TestSkillAdmits:
    def test_pull_pure_yaw(self):
        t = RigidTransform(quat_from_yaw(0.7), [0.1, 0.2, 0.0])
        assert skill_admits(SkillType.PULL_LEFT, t)

    def test_push_pitch_rejected(self):
        t = RigidTransform(quat_from_axis_angle([0, 1, 0], math.pi / 2), np.zeros(3))
        assert not skill_admits(SkillType.PUSH_RIGHT, t)

    def test_z_translation_rejected(self):
        t = RigidTransform(translation=[0, 0, 0.002])
        assert not skill_admits(SkillType.PULL_RIGHT, t)

    def test_bimanual_admits_anything(self, rng):
        for _ in range(20):
            assert skill_admits(SkillType.GRASP_REORIENT, random_transform(rng))
            assert skill_admits(SkillType.PICK_PLACE, random_transform(rng))

    def test_reference_point_changes_vertical_measure(self):
        # a slightly tilted rotation about a far pivot moves the origin
        # vertically but not the pivot
        pivot = np.array([0.5, 0.0, 0.0])
        t = RigidTransform.from_axis_angle([0, 1, 0], math.radians(0.9), point=pivot)
        assert not skill_admits(SkillType.PULL_RIGHT, t)  # origin swings ~8mm
        assert skill_admits(SkillType.PULL_RIGHT, t, at=pivot)


class TestGeneratePath:
    def test_identity_subgoal_transport_stays_at_contact(self):
        contact = one_palm()
        path = generate_path(SkillType.PULL_RIGHT, contact, RigidTransform())
        for wp in path.of_phase(Phase.TRANSPORT):
            pos, rot = transform_distance(wp[1], contact.right)
            assert pos < 1e-12 and rot < 1e-12

    def test_pull_translation_moves_contact(self):
        contact = one_palm("left")
        subgoal = RigidTransform(translation=[0.2, 0.0, 0.0])
        path = generate_path(SkillType.PULL_LEFT, contact, subgoal)
        final = path.of_phase(Phase.TRANSPORT)[-1][0]
        np.testing.assert_allclose(
            final.translation, contact.left.translation + [0.2, 0, 0], atol=1e-12
        )

    def test_grasp_finals_compose_subgoal_with_contact(self):
        contact = bimanual_contact()
        centroid = np.array([0.0, 0.0, 0.05])
        subgoal = RigidTransform.from_axis_angle([0, 1, 0], math.pi / 2, point=centroid)
        path = generate_path(SkillType.GRASP_REORIENT, contact, subgoal)
        final = path.of_phase(Phase.TRANSPORT)[-1]
        for got, expect in zip(final, (contact.left, contact.right)):
            pos, rot = transform_distance(got, compose(subgoal, expect))
            assert pos < 1e-9 and rot < 1e-9

    def test_sticking_invariant_random(self, rng):
        for _ in range(25):
            contact = bimanual_contact()
            subgoal = random_transform(rng, max_translation=0.2)
            path = generate_path(SkillType.GRASP_REORIENT, contact, subgoal, waypoints_per_phase=10)
            transport_idx = [i for i, p in enumerate(path.phases) if p is Phase.TRANSPORT]
            for rank, idx in enumerate(transport_idx, start=1):
                expect = interpolate_screw(subgoal, rank / len(transport_idx))
                for side in ("left", "right"):
                    rel = relative_to_contact(path, side, idx)
                    pos, rot = transform_distance(rel, expect)
                    assert pos < 1e-9 and rot < 1e-9

    def test_first_waypoint_at_standoff(self):
        contact = one_palm()
        path = generate_path(SkillType.PULL_RIGHT, contact, RigidTransform())
        first = path.waypoints[0][1]
        expected = contact.right.translation - APPROACH_STANDOFF * contact.right_normal
        np.testing.assert_allclose(first.translation, expected, atol=1e-12)

    def test_retract_up_for_grasp(self):
        contact = bimanual_contact()
        path = generate_path(SkillType.GRASP_REORIENT, contact, RigidTransform())
        release = path.of_phase(Phase.RELEASE)[-1]
        retract = path.of_phase(Phase.RETRACT)[-1]
        for rel, ret in zip(release, retract):
            delta = ret.translation - rel.translation
            assert delta[2] > 0 and abs(delta[0]) < 1e-12 and abs(delta[1]) < 1e-12

    def test_retract_along_palm_normal_for_pull(self):
        contact = one_palm()
        path = generate_path(SkillType.PULL_RIGHT, contact, RigidTransform())
        release = path.of_phase(Phase.RELEASE)[-1][1]
        retract = path.of_phase(Phase.RETRACT)[-1][1]
        delta = retract.translation - release.translation
        np.testing.assert_allclose(
            delta / np.linalg.norm(delta), -contact.right_normal, atol=1e-12
        )

    def test_phase_ordering(self):
        path = generate_path(SkillType.PULL_RIGHT, one_palm(), RigidTransform())
        order = [Phase.APPROACH, Phase.CONTACT, Phase.TRANSPORT, Phase.RELEASE, Phase.RETRACT]
        ranks = [order.index(p) for p in path.phases]
        assert ranks == sorted(ranks)
        assert path.phases.count(Phase.CONTACT) == 1

    def test_non_planar_subgoal_rejected_for_pull(self):
        subgoal = RigidTransform(translation=[0, 0, 0.05])
        with pytest.raises(NonPlanarSubgoalError, match="subgoal not planar"):
            generate_path(SkillType.PULL_RIGHT, one_palm(), subgoal)

    def test_arity_mismatch_rejected(self):
        with pytest.raises(ArityError, match="arity"):
            generate_path(SkillType.PULL_RIGHT, one_palm("left"), RigidTransform())
        with pytest.raises(ArityError, match="arity"):
            generate_path(SkillType.GRASP_REORIENT, one_palm(), RigidTransform())

    def test_bimanual_parallel_normals_rejected(self):
        left = one_palm("left", (-0.04, 0, 0.05), (1, 0, 0)).left
        right = one_palm("right", (0.04, 0, 0.05), (1, 0, 0)).right
        contact = ContactPose(left=left, right=right)
        with pytest.raises(ArityError, match="anti-parallel"):
            generate_path(SkillType.GRASP_REORIENT, contact, RigidTransform())

    def test_deterministic(self):
        contact = bimanual_contact()
        subgoal = RigidTransform(quat_from_yaw(0.3), [0.1, 0, 0])
        a = generate_path(SkillType.GRASP_REORIENT, contact, subgoal)
        b = generate_path(SkillType.GRASP_REORIENT, contact, subgoal)
        for (la, ra), (lb, rb) in zip(a.waypoints, b.waypoints):
            assert transform_distance(la, lb) == (0, 0)
            assert transform_distance(ra, rb) == (0, 0)


class TestExecuteSticking:
    def test_identity(self, rng):
        cloud = random_cloud(rng)
        out = execute_sticking(RigidTransform(), cloud)
        np.testing.assert_array_equal(out.points, cloud.points)

    def test_composition_law(self, rng):
        cloud = random_cloud(rng)
        a, b = random_transform(rng), random_transform(rng)
        stepwise = execute_sticking(a, execute_sticking(b, cloud))
        combined = execute_sticking(compose(a, b), cloud)
        np.testing.assert_allclose(stepwise.points, combined.points, atol=1e-9)

    def test_equals_apply(self, rng):
        cloud = random_cloud(rng)
        t = random_transform(rng)
        np.testing.assert_array_equal(execute_sticking(t, cloud).points, apply(t, cloud).points)
