"""Manipulation primitives as palm-waypoint generators under sticking contact.

Once a palm is in contact, object motion equals palm motion, so a skill is
fully described by the contact pose(s) and the object transform to realize.
Pull and push act with one palm and stay in the table plane; grasp-reorient
and pick-place are bimanual and free in SE(3).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    PointCloud,
    RigidTransform,
    apply,
    compose,
    interpolate_screw,
    invert,
    project_se2,
    quat_to_matrix,
    transform_distance,
)

APPROACH_STANDOFF = 0.03
RETRACT_DISTANCE = 0.06
DEFAULT_WAYPOINTS_PER_PHASE = 20

PLANAR_Z_TOLERANCE = 1e-3
PLANAR_TILT_TOLERANCE = math.radians(1.0)
BIMANUAL_ANTIPARALLEL_TOLERANCE = math.radians(15.0)


class SkillType(enum.Enum):
    PULL_LEFT = "pull_left"
    PULL_RIGHT = "pull_right"
    PUSH_LEFT = "push_left"
    PUSH_RIGHT = "push_right"
    GRASP_REORIENT = "grasp_reorient"
    PICK_PLACE = "pick_place"

    @property
    def bimanual(self) -> bool:
        return self in (SkillType.GRASP_REORIENT, SkillType.PICK_PLACE)

    @property
    def planar(self) -> bool:
        """True for skills restricted to SE(2) object motion."""
        return not self.bimanual

    @property
    def arm(self) -> str | None:
        if self.bimanual:
            return None
        return "left" if self.name.endswith("LEFT") else "right"


class Phase(enum.Enum):
    APPROACH = "approach"
    CONTACT = "contact"
    TRANSPORT = "transport"
    RELEASE = "release"
    RETRACT = "retract"


class ArityError(ValueError):
    pass


class NonPlanarSubgoalError(ValueError):
    pass


def _pose_normal(pose: RigidTransform) -> np.ndarray:
    """Palm frame convention: local +z is the direction the palm face points."""
    return quat_to_matrix(pose.rotation)[:, 2]


@dataclass(frozen=True, eq=False)
class ContactPose:
    """World palm pose(s) at the moment contact is established.

    Palm normals default to the pose z-axis; explicit values let a caller
    keep a measured surface normal that differs slightly from the pose.
    """

    left: RigidTransform | None = None
    right: RigidTransform | None = None
    left_normal: np.ndarray | None = None
    right_normal: np.ndarray | None = None

    def __post_init__(self):
        if self.left is None and self.right is None:
            raise ArityError("arity: contact pose must populate at least one palm")
        for side in ("left", "right"):
            pose = getattr(self, side)
            normal = getattr(self, f"{side}_normal")
            if pose is None:
                if normal is not None:
                    raise ArityError(f"arity: {side} normal given without a {side} pose")
                continue
            if normal is None:
                normal = _pose_normal(pose)
            else:
                normal = np.asarray(normal, dtype=np.float64).reshape(3)
                normal = normal / np.linalg.norm(normal)
            normal = normal.copy()
            normal.setflags(write=False)
            object.__setattr__(self, f"{side}_normal", normal)

    def palms(self) -> list[tuple[str, RigidTransform, np.ndarray]]:
        out = []
        if self.left is not None:
            out.append(("left", self.left, self.left_normal))
        if self.right is not None:
            out.append(("right", self.right, self.right_normal))
        return out

    def transformed(self, t: RigidTransform) -> "ContactPose":
        return ContactPose(
            None if self.left is None else compose(t, self.left),
            None if self.right is None else compose(t, self.right),
            None if self.left is None else t.rotate_vector(self.left_normal),
            None if self.right is None else t.rotate_vector(self.right_normal),
        )


@dataclass(frozen=True)
class PalmPath:
    """Palm waypoints with a phase label per waypoint."""

    waypoints: tuple[tuple[RigidTransform | None, RigidTransform | None], ...]
    phases: tuple[Phase, ...]

    def __post_init__(self):
        if len(self.waypoints) != len(self.phases):
            raise ValueError("waypoints and phases must align")
        if not self.waypoints:
            raise ValueError("path must be nonempty")

    def __len__(self) -> int:
        return len(self.waypoints)

    def of_phase(self, phase: Phase):
        return [w for w, p in zip(self.waypoints, self.phases) if p is phase]


def check_arity(skill: SkillType, contact: ContactPose) -> None:
    has_left = contact.left is not None
    has_right = contact.right is not None
    if skill.bimanual:
        if not (has_left and has_right):
            raise ArityError(f"arity: {skill.value} needs both palms")
        angle = math.acos(
            min(1.0, max(-1.0, float(np.dot(contact.left_normal, contact.right_normal))))
        )
        if angle < math.pi - BIMANUAL_ANTIPARALLEL_TOLERANCE:
            raise ArityError(
                f"arity: {skill.value} palm normals must be anti-parallel "
                f"(angle {math.degrees(angle):.1f} deg)"
            )
    else:
        want_left = skill.arm == "left"
        if has_left != want_left or has_right == want_left:
            raise ArityError(f"arity: {skill.value} needs exactly the {skill.arm} palm")


def skill_admits(skill: SkillType, subgoal: RigidTransform, at=None) -> bool:
    """Whether the subgoal lies in the skill's motion class (SE(2) for pull/push).

    The vertical-motion test is evaluated at ``at`` (default: the origin).
    A transform's raw z-translation is not frame-invariant once the rotation
    carries any tilt, so callers should pass the object position they care
    about; the planner uses the node cloud centroid.
    """
    if skill.bimanual:
        return True
    if at is None:
        dz = float(subgoal.translation[2])
    else:
        p = np.asarray(at, dtype=np.float64)
        dz = float(subgoal.apply_point(p)[2] - p[2])
    if abs(dz) >= PLANAR_Z_TOLERANCE:
        return False
    # tilt of the rotated z-axis measures combined roll/pitch
    r = quat_to_matrix(subgoal.rotation)
    tilt = math.acos(min(1.0, max(-1.0, float(r[2, 2]))))
    return tilt < PLANAR_TILT_TOLERANCE


def _require_planar(subgoal: RigidTransform) -> None:
    pos_err, rot_err = transform_distance(project_se2(subgoal), subgoal)
    if pos_err > 1e-6 or rot_err > 1e-6:
        raise NonPlanarSubgoalError("subgoal not planar")


def _offset_along(pose: RigidTransform, direction: np.ndarray, distance: float) -> RigidTransform:
    return RigidTransform(pose.rotation, pose.translation + distance * direction)


def generate_path(
    skill: SkillType,
    contact: ContactPose,
    subgoal: RigidTransform,
    waypoints_per_phase: int = DEFAULT_WAYPOINTS_PER_PHASE,
    approach_standoff: float = APPROACH_STANDOFF,
    retract_distance: float = RETRACT_DISTANCE,
) -> PalmPath:
    """Cartesian palm waypoints: approach, contact, transport, release, retract.

    Transport waypoint i places every palm at
    ``interpolate_screw(subgoal, f_i) o contact`` so both palms carry the
    object by exactly the subgoal motion (sticking contact).
    """
    if waypoints_per_phase < 1:
        raise ValueError("waypoints_per_phase must be >= 1")
    check_arity(skill, contact)
    if skill.planar:
        _require_planar(subgoal)

    palms = contact.palms()
    waypoints: list[tuple[RigidTransform | None, RigidTransform | None]] = []
    phases: list[Phase] = []

    def emit(poses: dict[str, RigidTransform], phase: Phase) -> None:
        waypoints.append((poses.get("left"), poses.get("right")))
        phases.append(phase)

    # approach: slide in from the standoff along each palm normal
    for i in range(waypoints_per_phase):
        back = approach_standoff * (1.0 - i / waypoints_per_phase)
        emit(
            {side: _offset_along(pose, -normal, back) for side, pose, normal in palms},
            Phase.APPROACH,
        )
    emit({side: pose for side, pose, _ in palms}, Phase.CONTACT)

    for i in range(1, waypoints_per_phase + 1):
        step = interpolate_screw(subgoal, i / waypoints_per_phase)
        emit({side: compose(step, pose) for side, pose, _ in palms}, Phase.TRANSPORT)

    final = {side: compose(subgoal, pose) for side, pose, _ in palms}
    final_normals = {side: subgoal.rotate_vector(normal) for side, _, normal in palms}
    emit(final, Phase.RELEASE)

    up = np.array([0.0, 0.0, 1.0])
    for i in range(1, waypoints_per_phase + 1):
        out = retract_distance * i / waypoints_per_phase
        emit(
            {
                side: _offset_along(
                    final[side], up if skill.bimanual else -final_normals[side], out
                )
                for side, _, _ in palms
            },
            Phase.RETRACT,
        )
    return PalmPath(tuple(waypoints), tuple(phases))


def execute_sticking(subgoal: RigidTransform, object_cloud: PointCloud) -> PointCloud:
    """Idealized skill outcome: the object moves exactly by the subgoal."""
    return apply(subgoal, object_cloud)


def relative_to_contact(path: PalmPath, side: str, index: int) -> RigidTransform:
    """Transform of waypoint ``index`` relative to the contact waypoint, one palm."""
    contact_idx = path.phases.index(Phase.CONTACT)
    pick = 0 if side == "left" else 1
    base = path.waypoints[contact_idx][pick]
    pose = path.waypoints[index][pick]
    if base is None or pose is None:
        raise ArityError(f"arity: path has no {side} palm")
    return compose(pose, invert(base))
