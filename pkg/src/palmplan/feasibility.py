"""Workspace-level feasibility: preconditions, motion checks, contact refinement.

Robot kinematics are abstracted into a geometric workspace model: each arm
reaches a sphere about a shoulder anchor clipped to a box above the table,
and each palm is a thin rectangular patch. Motion checks run the cheap
endpoint stage first and sweep every waypoint only when it passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    PointCloud,
    RigidTransform,
    _freeze,
    interpolate_screw,
    quat_to_matrix,
)
from .skills import ContactPose, PalmPath, Phase, SkillType

PENETRATION_TOLERANCE = 0.002
REFINE_STEP = 0.001
REFINE_SPAN = 0.03
PALM_PATCH_THICKNESS = 0.004


@dataclass(frozen=True, eq=False)
class Rect2D:
    """Axis-aligned planar rectangle (closed; boundary points are inside)."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _freeze(np.asarray(self.center, float).reshape(2)))
        he = np.asarray(self.half_extents, float).reshape(2)
        if np.any(he <= 0):
            raise ValueError("rectangle half extents must be positive")
        object.__setattr__(self, "half_extents", _freeze(he))

    def contains(self, xy: np.ndarray) -> bool:
        d = np.abs(np.asarray(xy, float).reshape(2) - self.center)
        return bool(np.all(d <= self.half_extents))

    def contains_rect(self, other: "Rect2D") -> bool:
        d = np.abs(other.center - self.center) + other.half_extents
        return bool(np.all(d <= self.half_extents + 1e-12))


@dataclass(frozen=True, eq=False)
class WorkspaceModel:
    """Reachability and collision geometry shared by every feasibility check."""

    table: Rect2D = field(default_factory=lambda: Rect2D(np.zeros(2), (0.45, 0.3)))
    table_height: float = 0.0
    left_shoulder: np.ndarray = field(default_factory=lambda: np.array([-0.15, -0.40, 0.30]))
    right_shoulder: np.ndarray = field(default_factory=lambda: np.array([0.15, -0.40, 0.30]))
    reach_radius: float = 0.65
    workspace_ceiling: float = 0.8
    palm_half_extents: tuple[float, float] = (0.025, 0.0125)
    grasp_region: Rect2D = field(default_factory=lambda: Rect2D((0.0, -0.10), (0.20, 0.15)))

    def __post_init__(self):
        object.__setattr__(self, "left_shoulder", _freeze(np.asarray(self.left_shoulder, float)))
        object.__setattr__(self, "right_shoulder", _freeze(np.asarray(self.right_shoulder, float)))
        if self.reach_radius <= 0 or self.workspace_ceiling <= 0:
            raise ValueError("reach radius and ceiling must be positive")
        if not self.table.contains_rect(self.grasp_region):
            raise ValueError("grasp precondition region must lie within the table")
        for shoulder in (self.left_shoulder, self.right_shoulder):
            anchor = np.array([*self.grasp_region.center, self.table_height])
            if np.linalg.norm(anchor - shoulder) > self.reach_radius:
                raise ValueError("arm cannot reach the bimanual precondition region")

    def precondition_region(self, skill: SkillType) -> Rect2D:
        return self.grasp_region if skill.bimanual else self.table

    def shoulder(self, side: str) -> np.ndarray:
        return self.left_shoulder if side == "left" else self.right_shoulder

    def in_reach(self, side: str, point: np.ndarray) -> bool:
        p = np.asarray(point, float)
        if np.linalg.norm(p - self.shoulder(side)) > self.reach_radius:
            return False
        if not (self.table_height <= p[2] <= self.table_height + self.workspace_ceiling):
            return False
        margin = self.reach_radius  # the box clips height, not lateral overhang
        d = np.abs(p[:2] - self.table.center)
        return bool(np.all(d <= self.table.half_extents + margin))


def satisfies_preconditions(skill: SkillType, cloud: PointCloud, ws: WorkspaceModel) -> bool:
    """Gate on the cloud's mean planar position before sampling parameters."""
    centroid = cloud.centroid()
    return ws.precondition_region(skill).contains(centroid[:2])


# ---------------------------------------------------------------------------
# Palm patch geometry
# ---------------------------------------------------------------------------

def _patch_corners(pose: RigidTransform, ws: WorkspaceModel) -> np.ndarray:
    hx, hy = ws.palm_half_extents
    local = np.array([[hx, hy, 0], [hx, -hy, 0], [-hx, hy, 0], [-hx, -hy, 0]], dtype=float)
    return pose.apply_points(local)

def _patch_ok(pose: RigidTransform, side: str, ws: WorkspaceModel) -> bool:
    corners = _patch_corners(pose, ws)
    if corners[:, 2].min() < ws.table_height - PENETRATION_TOLERANCE:
        return False
    return ws.in_reach(side, pose.translation)


def _obb_axes(pose: RigidTransform, ws: WorkspaceModel):
    r = quat_to_matrix(pose.rotation)
    half = np.array([*ws.palm_half_extents, PALM_PATCH_THICKNESS / 2.0])
    return r, half


def _patches_intersect(a: RigidTransform, b: RigidTransform, ws: WorkspaceModel) -> bool:
    """Separating-axis test between the two palm patches as thin boxes."""
    ra, ha = _obb_axes(a, ws)
    rb, hb = _obb_axes(b, ws)
    t = b.translation - a.translation
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cross = np.cross(ra[:, i], rb[:, j])
            if np.linalg.norm(cross) > 1e-9:
                axes.append(cross)
    for axis in axes:
        axis = axis / np.linalg.norm(axis)
        span_a = float(np.sum(ha * np.abs(axis @ ra)))
        span_b = float(np.sum(hb * np.abs(axis @ rb)))
        if abs(float(axis @ t)) > span_a + span_b:
            return False
    return True


# ---------------------------------------------------------------------------
# Motion feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MotionCheck:
    ok: bool
    stage: int
    reason: str | None = None


def _waypoint_ok(waypoint, ws: WorkspaceModel) -> bool:
    left, right = waypoint
    if left is not None and not _patch_ok(left, "left", ws):
        return False
    if right is not None and not _patch_ok(right, "right", ws):
        return False
    if left is not None and right is not None and _patches_intersect(left, right, ws):
        return False
    return True


def check_motion(
    path: PalmPath,
    object_cloud: PointCloud,
    subgoal: RigidTransform,
    ws: WorkspaceModel,
) -> MotionCheck:
    """Two-stage motion check; stage 2 runs only when stage 1 passes."""
    in_contact = [
        i for i, p in enumerate(path.phases) if p in (Phase.CONTACT, Phase.TRANSPORT)
    ]
    if not in_contact:
        return MotionCheck(False, 1, "no contact waypoints")

    # stage 1: endpoints of the in-contact segment
    for i in (in_contact[0], in_contact[-1]):
        left, right = path.waypoints[i]
        for side, pose in (("left", left), ("right", right)):
            if pose is not None and not _patch_ok(pose, side, ws):
                return MotionCheck(False, 1, "endpoint palm")

    # stage 2: full sweep
    for waypoint in path.waypoints:
        if not _waypoint_ok(waypoint, ws):
            return MotionCheck(False, 2, "palm sweep")
    n_transport = sum(1 for p in path.phases if p is Phase.TRANSPORT)
    floor = ws.table_height - PENETRATION_TOLERANCE
    for i in range(1, n_transport + 1):
        step = interpolate_screw(subgoal, i / n_transport)
        if step.apply_points(object_cloud.points)[:, 2].min() < floor:
            return MotionCheck(False, 2, "object under table")
    return MotionCheck(True, 2)


def feasible_motion(
    path: PalmPath,
    object_cloud: PointCloud,
    subgoal: RigidTransform,
    ws: WorkspaceModel,
) -> bool:
    return check_motion(path, object_cloud, subgoal, ws).ok


# ---------------------------------------------------------------------------
# Contact refinement
# ---------------------------------------------------------------------------

def _refine_position(
    position: np.ndarray,
    normal: np.ndarray,
    tree: cKDTree,
    points: np.ndarray,
    step: float,
    span: float,
) -> tuple[np.ndarray, bool]:
    n_steps = int(round(span / step))
    offsets = np.arange(-n_steps, n_steps + 1) * step
    samples = position[None, :] + offsets[:, None] * normal[None, :]
    dist, idx = tree.query(samples, k=1)
    best = int(np.argmin(dist))
    if dist[best] > span:
        return position, False
    return points[idx[best]], True


def refine_contact(
    contact: ContactPose,
    dense_cloud: PointCloud,
    step: float = REFINE_STEP,
    span: float = REFINE_SPAN,
) -> tuple[ContactPose, bool]:
    """Snap palm positions onto the observed surface along the palm-normal ray.

    Orientations are never touched. Returns (refined contact, warning); the
    warning is set when some palm had no cloud point near its ray and was
    left unchanged.
    """
    tree = cKDTree(dense_cloud.points)
    warning = False
    poses: dict[str, RigidTransform | None] = {"left": contact.left, "right": contact.right}
    normals: dict[str, np.ndarray | None] = {
        "left": contact.left_normal,
        "right": contact.right_normal,
    }
    for side, pose, normal in contact.palms():
        position, moved = _refine_position(
            pose.translation, normal, tree, dense_cloud.points, step, span
        )
        if not moved:
            warning = True
            continue
        poses[side] = RigidTransform(pose.rotation, position)
    return (
        ContactPose(poses["left"], poses["right"], normals["left"], normals["right"]),
        warning,
    )
