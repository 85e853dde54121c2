"""Skill-parameter samplers.

Every sampler maps (skill, cloud, scene, seed) to a subgoal / contact-pose
pair. The baseline samplers are hand-designed heuristics over estimated
normals and segmented planes; reorientation subgoals are produced by
registering a masked subset of the cloud onto a support surface, so the
resulting transform is grounded in actual object-environment contact instead
of being guessed in free space.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import cloudproc
from .cloudproc import NoOverlapError, Plane
from .geometry import (
    PointCloud,
    RigidTransform,
    as_generator,
    compose,
    project_se2,
    quat_from_yaw,
    quat_rotate,
)
from .scene import Scene
from .seeding import derive_rng, derive_seed
from .skills import ContactPose, SkillType

REGISTRATION_MIN_MASK_POINTS = 10
REGISTRATION_MAX_CORR_DIST = 0.35
REGISTRATION_FINE_CORR_DIST = 0.03
REGISTRATION_QUALITY_DIST = 0.01
REGISTRATION_QUALITY_MIN = 0.5

ANTIPODAL_RAY_STEP = 0.002
ANTIPODAL_RAY_TOLERANCE = 0.006
ANTIPODAL_NORMAL_TOLERANCE = math.radians(15.0)
GRASP_ATTEMPTS = 200
CONTACT_Z_CLEARANCE = 0.015
# front-direction bands (world-z component of the palm +x axis)
GRASP_FRONT_Z_RANGE = (-math.sin(math.radians(35.0)), -math.sin(math.radians(5.0)))
PUSH_FRONT_Z_RANGE = (-0.3, 0.0)

PULL_TOP_NORMAL_TOLERANCE = math.radians(20.0)
PUSH_SIDE_NORMAL_TOLERANCE = math.radians(30.0)
PUSH_DIRECTION_CONE = math.radians(30.0)
PUSH_MAX_YAW = math.radians(30.0)
PUSH_DISTANCE_RANGE = (0.05, 0.30)

_UP = np.array([0.0, 0.0, 1.0])


class SamplerError(RuntimeError):
    pass


class RegistrationFailedError(SamplerError):
    pass


class NoGraspFoundError(SamplerError):
    pass


class DegenerateGeometryError(SamplerError):
    pass


class NoTopSurfaceError(SamplerError):
    pass


class NoPushFaceError(SamplerError):
    pass


@dataclass(frozen=True, eq=False)
class SkillParams:
    """One skill invocation: the object subgoal, the contact pose(s), and the
    optional per-point mask that produced a registered subgoal."""

    subgoal: RigidTransform
    contact: ContactPose
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool).copy()
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)


class SamplerInterface(abc.ABC):
    """Pluggable parameter source; must be deterministic for fixed inputs + seed."""

    @abc.abstractmethod
    def draw(self, skill: SkillType, cloud: PointCloud, scene: Scene, seed: int) -> SkillParams:
        ...

    def begin_session(self, root_cloud: PointCloud, scene: Scene, seed: int) -> PointCloud:
        """Hook called once per planning session; may return an augmented cloud."""
        return root_cloud

    def notify_derived(
        self, parent: PointCloud, child: PointCloud, transform: RigidTransform
    ) -> None:
        """Hook called when the planner derives ``child = transform(parent)``."""


# ---------------------------------------------------------------------------
# Mask-based subgoal registration
# ---------------------------------------------------------------------------

def _mask_outward_normal(masked: np.ndarray, cloud_centroid: np.ndarray) -> np.ndarray:
    centered = masked - masked.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n = vt[-1]
    if n @ (masked.mean(axis=0) - cloud_centroid) < 0:
        n = -n
    return n / np.linalg.norm(n)


def _pitch_axes(mask_normal: np.ndarray) -> list[np.ndarray]:
    primary = np.cross(_UP, mask_normal)
    norm = np.linalg.norm(primary)
    if norm < 0.1:
        # mask faces up or down; any horizontal axis will do
        return [np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])]
    primary = primary / norm
    secondary = np.cross(_UP, primary)
    return [primary, secondary / np.linalg.norm(secondary)]


def _init_transforms(
    planar_init: RigidTransform, mask_normal: np.ndarray, pivot: np.ndarray
) -> list[RigidTransform]:
    """Initialization ladder: the forward quarter pitch about each candidate
    axis, then a half turn and the reverse quarter pitch as fallbacks (a mask
    already facing up needs the half turn; a bad normal sign needs the
    reverse)."""
    axes = _pitch_axes(mask_normal)
    angles = [(axes[0], math.pi / 2), (axes[1], math.pi / 2), (axes[0], math.pi),
              (axes[0], -math.pi / 2)]
    return [
        compose(planar_init, RigidTransform.from_axis_angle(axis, angle, point=pivot))
        for axis, angle in angles
    ]


def _registration_quality(
    cloud_points: np.ndarray,
    mask: np.ndarray,
    transform: RigidTransform,
    tree: cKDTree,
    support_height: float,
) -> float:
    """Fraction of mask points landing on the target, zeroed out for
    registrations that put the object body under the support surface (a
    mirrored fit has identical point-to-point cost but is physically wrong)."""
    moved = transform.apply_points(cloud_points)
    if moved[:, 2].min() < support_height - REGISTRATION_QUALITY_DIST:
        return -1.0
    dist, _ = tree.query(moved[mask], k=1)
    return float(np.mean(dist <= REGISTRATION_QUALITY_DIST))


def register_mask_subgoal(
    cloud: PointCloud,
    mask: np.ndarray,
    target: PointCloud,
    planar_init: RigidTransform,
    pitch_init: bool = True,
    max_corr_dist: float = REGISTRATION_MAX_CORR_DIST,
    max_iters: int = 60,
) -> RigidTransform:
    """Recover the reorientation subgoal that rests the masked points on ``target``.

    The ICP initialization composes ``planar_init`` with a forward quarter
    pitch about the masked-point centroid; the pitch axis is the horizontal
    axis orthogonal to the mask normal, with the perpendicular horizontal
    axis retried when the registration lands few mask points on the target.
    The returned transform applies to the full cloud.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(cloud),):
        raise ValueError("mask must be a boolean vector over the cloud")
    if int(mask.sum()) < REGISTRATION_MIN_MASK_POINTS:
        raise ValueError(f"mask must select >= {REGISTRATION_MIN_MASK_POINTS} points")
    masked = PointCloud(cloud.points[mask])
    pivot = masked.centroid()

    if not pitch_init:
        inits = [planar_init]
    else:
        normal = _mask_outward_normal(masked.points, cloud.centroid())
        inits = _init_transforms(planar_init, normal, pivot)

    tree = cKDTree(target.points)
    support_height = float(np.median(target.points[:, 2]))
    best: RigidTransform | None = None
    best_quality = -2.0
    for init in inits:
        try:
            result = cloudproc.icp_point_to_point(
                masked, target, init, max_corr_dist=max_corr_dist, max_iters=max_iters
            )
        except NoOverlapError:
            continue
        try:
            # tighten correspondences once the mask is roughly on the surface
            result = cloudproc.icp_point_to_point(
                masked,
                target,
                result.transform,
                max_corr_dist=REGISTRATION_FINE_CORR_DIST,
                max_iters=max_iters,
            )
        except NoOverlapError:
            pass
        quality = _registration_quality(
            cloud.points, mask, result.transform, tree, support_height
        )
        if quality > best_quality:
            best, best_quality = result.transform, quality
        if quality >= REGISTRATION_QUALITY_MIN:
            break
    if best is None or best_quality < 0.0:
        raise RegistrationFailedError("registration failed")
    return best


# ---------------------------------------------------------------------------
# Shared helpers for the hand-designed samplers
# ---------------------------------------------------------------------------

def _ensure_normals(cloud: PointCloud, scene: Scene, k: int = 16) -> PointCloud:
    if cloud.normals is not None:
        return cloud
    k = min(k, len(cloud))
    return cloudproc.estimate_normals(cloud, k=k, view_points=scene.camera_positions)


def _palm_pose(
    position: np.ndarray,
    palm_normal: np.ndarray,
    rng,
    front_z_range: tuple[float, float] | None = None,
) -> RigidTransform:
    """Palm frame with +z on ``palm_normal`` and the front (+x) angle sampled
    in-plane. ``front_z_range`` restricts the front direction's world-z
    component (below the horizon keeps the wrist clear of the table)."""
    z = palm_normal / np.linalg.norm(palm_normal)
    seed_axis = _UP if abs(z @ _UP) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(z, seed_axis)
    u = u / np.linalg.norm(u)
    v = np.cross(z, u)
    amplitude = math.hypot(u[2], v[2])
    if front_z_range is not None and amplitude > 1e-9:
        # front_z(theta) = amplitude * cos(theta - phase)
        phase = math.atan2(v[2], u[2])
        lo = max(front_z_range[0], -amplitude)
        hi = min(front_z_range[1], amplitude)
        if lo > hi:
            target = -amplitude if abs(front_z_range[0]) > abs(front_z_range[1]) else amplitude
            target = min(max(target, front_z_range[0]), front_z_range[1])
            theta = phase + math.pi if target < 0 else phase
        else:
            c = rng.uniform(lo, hi) / amplitude
            sign = 1.0 if rng.integers(2) else -1.0
            theta = phase + sign * math.acos(min(max(c, -1.0), 1.0))
    else:
        theta = rng.uniform(-math.pi, math.pi)
    front = math.cos(theta) * u + math.sin(theta) * v
    rot = np.column_stack([front, np.cross(z, front), z])
    return RigidTransform.from_rotation_matrix(rot, position)


def _planar_subgoal(centroid: np.ndarray, target_xy: np.ndarray, yaw: float) -> RigidTransform:
    """SE(2) subgoal moving the cloud centroid to ``target_xy`` with the given yaw."""
    q = quat_from_yaw(yaw)
    rotated = quat_rotate(q, centroid)
    translation = np.array([target_xy[0] - rotated[0], target_xy[1] - rotated[1], 0.0])
    return project_se2(RigidTransform(q, translation))


def _table_margins(cloud: PointCloud, scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    c = cloud.centroid()
    radius = float(np.max(np.hypot(*(cloud.points[:, :2] - c[:2]).T)))
    table = scene.table
    half = np.maximum(table.half_extents - radius, 0.01)
    return table.center - half, table.center + half


def _clip_distance_to_rect(origin: np.ndarray, direction: np.ndarray, lo, hi) -> float:
    """Largest s >= 0 with origin + s*direction inside [lo, hi] (per axis)."""
    s_max = math.inf
    for a in range(2):
        d = direction[a]
        if abs(d) < 1e-12:
            if not (lo[a] <= origin[a] <= hi[a]):
                return 0.0
            continue
        bound = (hi[a] - origin[a]) / d if d > 0 else (lo[a] - origin[a]) / d
        s_max = min(s_max, bound)
    return max(s_max, 0.0)


# ---------------------------------------------------------------------------
# Baseline samplers
# ---------------------------------------------------------------------------

def baseline_pull_sampler(
    cloud: PointCloud,
    scene: Scene,
    seed,
    skill: SkillType = SkillType.PULL_RIGHT,
) -> SkillParams:
    """Palm face-down on an upward-facing point, planar subgoal within the table."""
    rng = as_generator(seed)
    cloud = _ensure_normals(cloud, scene)
    upward = cloud.normals @ _UP > math.cos(PULL_TOP_NORMAL_TOLERANCE)
    candidates = np.flatnonzero(upward)
    if candidates.size == 0:
        raise NoTopSurfaceError("no top surface")
    pick = int(candidates[rng.integers(candidates.size)])
    pose = _palm_pose(cloud.points[pick], -_UP, rng)

    lo, hi = _table_margins(cloud, scene)
    target_xy = rng.uniform(lo, hi)
    yaw = rng.uniform(-math.pi, math.pi)
    subgoal = _planar_subgoal(cloud.centroid(), target_xy, yaw)
    contact = _one_arm_contact(skill, pose)
    return SkillParams(subgoal, contact)


def baseline_push_sampler(
    cloud: PointCloud,
    scene: Scene,
    seed,
    skill: SkillType = SkillType.PUSH_RIGHT,
) -> SkillParams:
    """Palm against a side face, planar subgoal roughly along the inward normal."""
    rng = as_generator(seed)
    cloud = _ensure_normals(cloud, scene)
    side = np.abs(cloud.normals @ _UP) < math.sin(PUSH_SIDE_NORMAL_TOLERANCE)
    high_enough = cloud.points[:, 2] >= scene.table_height + 0.01
    candidates = np.flatnonzero(side & high_enough)
    if candidates.size == 0:
        raise NoPushFaceError("no push face")
    pick = int(candidates[rng.integers(candidates.size)])
    point = cloud.points[pick]
    normal = cloud.normals[pick]
    pose = _palm_pose(point, -normal, rng, front_z_range=PUSH_FRONT_Z_RANGE)

    inward = -normal[:2]
    inward = inward / np.linalg.norm(inward)
    cone = rng.uniform(-PUSH_DIRECTION_CONE, PUSH_DIRECTION_CONE)
    c, s = math.cos(cone), math.sin(cone)
    direction = np.array([c * inward[0] - s * inward[1], s * inward[0] + c * inward[1]])
    centroid = cloud.centroid()
    lo, hi = _table_margins(cloud, scene)
    reach = _clip_distance_to_rect(centroid[:2], direction, lo, hi)
    distance = min(rng.uniform(*PUSH_DISTANCE_RANGE), reach)
    target_xy = centroid[:2] + distance * direction
    yaw = rng.uniform(-PUSH_MAX_YAW, PUSH_MAX_YAW)
    subgoal = _planar_subgoal(centroid, target_xy, yaw)
    contact = _one_arm_contact(skill, pose)
    return SkillParams(subgoal, contact)


def _one_arm_contact(skill: SkillType, pose: RigidTransform) -> ContactPose:
    if skill.arm == "left":
        return ContactPose(left=pose)
    return ContactPose(right=pose)


def _opposite_plane(planes: list[Plane], reference: Plane) -> Plane | None:
    best = None
    best_dot = -math.cos(math.radians(30.0))
    for plane in planes:
        if plane is reference:
            continue
        d = float(plane.normal @ reference.normal)
        if d < best_dot:
            best, best_dot = plane, d
    return best


def _antipodal_pair(
    cloud: PointCloud, candidates: np.ndarray, rng
) -> tuple[int, int]:
    """March inward from a candidate along its (negated) normal and take the
    first far point near the ray whose normal is anti-parallel."""
    pts = cloud.points
    normals = cloud.normals
    tree = cKDTree(pts[candidates])
    span = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    offsets = np.arange(ANTIPODAL_RAY_STEP, span + ANTIPODAL_RAY_STEP, ANTIPODAL_RAY_STEP)
    cos_tol = math.cos(math.pi - ANTIPODAL_NORMAL_TOLERANCE)
    for _ in range(GRASP_ATTEMPTS):
        i = int(candidates[rng.integers(candidates.size)])
        ray = pts[i] - offsets[:, None] * normals[i]
        dist, nearest = tree.query(ray, k=1)
        for step_idx in np.flatnonzero(dist <= ANTIPODAL_RAY_TOLERANCE):
            j = int(candidates[nearest[step_idx]])
            if j == i or np.linalg.norm(pts[j] - pts[i]) < 2 * ANTIPODAL_RAY_TOLERANCE:
                continue
            if float(normals[i] @ normals[j]) <= cos_tol:
                return i, j
    raise NoGraspFoundError("no grasp found")


def baseline_grasp_sampler(
    cloud: PointCloud,
    scene: Scene,
    seed,
    planes: list[Plane] | None = None,
    target_surface: str = "table",
    skill: SkillType = SkillType.GRASP_REORIENT,
) -> SkillParams:
    """Bimanual sampler: registered reorientation subgoal + antipodal side grasp.

    One segmented plane is drawn as the face to rest on the support surface;
    contacts avoid that plane, its opposite, and anything close to the table.
    """
    rng = as_generator(seed)
    cloud = _ensure_normals(cloud, scene)
    if planes is None:
        planes = cloudproc.segment_planes(cloud, seed=derive_rng(_int_seed(seed), "planes"))
    if len(planes) < 2:
        raise DegenerateGeometryError("degenerate geometry")

    lo, hi = _table_margins(cloud, scene)
    shift = rng.uniform(lo, hi) - cloud.centroid()[:2]
    planar = RigidTransform(translation=np.array([shift[0], shift[1], 0.0]))

    removed = np.zeros(len(cloud), dtype=bool)
    mask = None
    if skill is SkillType.PICK_PLACE:
        # pure transport: carry the object to a new planar position
        subgoal = planar
    else:
        reg_plane = planes[int(rng.integers(len(planes)))]
        mask = np.zeros(len(cloud), dtype=bool)
        mask[reg_plane.inlier_indices] = True
        target = scene.support_cloud(target_surface)
        subgoal = register_mask_subgoal(cloud, mask, target, planar)
        # contacting the resting face or its opposite would trap a palm
        removed |= mask
        opposite = _opposite_plane(planes, reg_plane)
        if opposite is not None:
            removed[opposite.inlier_indices] = True
    # a palm must clear the table both where it grabs and where it lets go;
    # at the far end the palm angle is object-determined, so budget for the
    # full patch half-diagonal there
    end_clearance = math.hypot(*scene.workspace.palm_half_extents) + 0.005
    low = cloud.points[:, 2] < scene.table_height + CONTACT_Z_CLEARANCE
    low |= subgoal.apply_points(cloud.points)[:, 2] < scene.table_height + end_clearance
    candidates = np.flatnonzero(~removed & ~low)
    if candidates.size < 2:
        raise NoGraspFoundError("no grasp found")

    i, j = _antipodal_pair(cloud, candidates, rng)
    pose_i = _palm_pose(cloud.points[i], -cloud.normals[i], rng, GRASP_FRONT_Z_RANGE)
    pose_j = _palm_pose(cloud.points[j], -cloud.normals[j], rng, GRASP_FRONT_Z_RANGE)
    # stable arm assignment: the palm farther left (smaller x) goes to the left arm
    if cloud.points[i][0] <= cloud.points[j][0]:
        contact = ContactPose(left=pose_i, right=pose_j)
    else:
        contact = ContactPose(left=pose_j, right=pose_i)
    return SkillParams(subgoal, contact, mask)


def _int_seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**62))
    return int(seed)


class BaselineSampler(SamplerInterface):
    """Heuristic sampler with a per-session plane cache.

    Planes are segmented once per session on the root cloud and transformed
    alongside every derived cloud, so repeated draws during planning never
    re-run RANSAC.
    """

    def __init__(self, normals_k: int = 16, target_surface: str = "table"):
        self.normals_k = normals_k
        self.target_surface = target_surface
        self._planes: dict[int, list[Plane]] = {}
        self._keepalive: dict[int, np.ndarray] = {}

    def begin_session(self, root_cloud: PointCloud, scene: Scene, seed: int) -> PointCloud:
        self._planes.clear()
        self._keepalive.clear()
        root_cloud = _ensure_normals(root_cloud, scene, self.normals_k)
        planes = cloudproc.segment_planes(root_cloud, seed=derive_rng(seed, "planes"))
        self._remember(root_cloud, planes)
        return root_cloud

    def notify_derived(self, parent, child, transform) -> None:
        planes = self._planes.get(id(parent.points))
        if planes is not None:
            self._remember(child, [p.transformed(transform) for p in planes])

    def _remember(self, cloud: PointCloud, planes: list[Plane]) -> None:
        self._planes[id(cloud.points)] = planes
        self._keepalive[id(cloud.points)] = cloud.points

    def _planes_for(self, cloud: PointCloud, seed) -> list[Plane]:
        planes = self._planes.get(id(cloud.points))
        if planes is None:
            planes = cloudproc.segment_planes(cloud, seed=derive_rng(_int_seed(seed), "planes"))
        return planes

    def draw(self, skill: SkillType, cloud: PointCloud, scene: Scene, seed: int) -> SkillParams:
        if skill in (SkillType.PULL_LEFT, SkillType.PULL_RIGHT):
            return baseline_pull_sampler(cloud, scene, seed, skill)
        if skill in (SkillType.PUSH_LEFT, SkillType.PUSH_RIGHT):
            return baseline_push_sampler(cloud, scene, seed, skill)
        cloud = _ensure_normals(cloud, scene, self.normals_k)
        return baseline_grasp_sampler(
            cloud,
            scene,
            seed,
            planes=self._planes_for(cloud, seed),
            target_surface=self.target_surface,
            skill=skill,
        )


# ---------------------------------------------------------------------------
# Replay sampler and its record format
# ---------------------------------------------------------------------------

def _format_pose(pose: RigidTransform | None) -> str:
    if pose is None:
        return "-"
    return " ".join(repr(float(v)) for v in pose.as_vector())


def format_replay_record(skill: SkillType, params: SkillParams) -> str:
    fields = [skill.value]
    fields.append(" ".join(repr(float(v)) for v in params.subgoal.as_vector()))
    fields.append("L " + _format_pose(params.contact.left))
    fields.append("R " + _format_pose(params.contact.right))
    if params.mask is not None:
        idx = np.flatnonzero(params.mask)
        fields.append("M " + (",".join(str(int(k)) for k in idx) if idx.size else "-"))
    return " ".join(fields)


def parse_replay_record(line: str) -> tuple[SkillType, RigidTransform, dict]:
    tokens = line.split()
    skill = SkillType(tokens[0])
    subgoal = RigidTransform.from_vector(np.array([float(v) for v in tokens[1:8]]))
    rest = tokens[8:]

    def take_pose(marker: str, rest: list[str]):
        if not rest or rest[0] != marker:
            raise ValueError(f"replay record missing {marker} palm section")
        rest = rest[1:]
        if rest and rest[0] == "-":
            return None, rest[1:]
        vec = np.array([float(v) for v in rest[:7]])
        return RigidTransform.from_vector(vec), rest[7:]

    left, rest = take_pose("L", rest)
    right, rest = take_pose("R", rest)
    mask_indices = None
    if rest:
        if rest[0] != "M":
            raise ValueError("unexpected trailing tokens in replay record")
        if len(rest) > 1 and rest[1] != "-":
            mask_indices = np.array([int(v) for v in rest[1].split(",")], dtype=np.intp)
    return skill, subgoal, {"left": left, "right": right, "mask_indices": mask_indices}


def write_replay_file(path, records) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for skill, params in records:
            fh.write(format_replay_record(skill, params) + "\n")


def read_replay_file(path) -> list[tuple[SkillType, RigidTransform, dict]]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(parse_replay_record(line))
    return out


class ReplaySampler(SamplerInterface):
    """Replays recorded parameters; the seed indexes into the matching records.

    Lets tests and offline pipelines inject arbitrary parameter distributions
    without touching the planner.
    """

    def __init__(self, records):
        self._records = list(records)
        if not self._records:
            raise ValueError("replay sampler needs at least one record")

    @classmethod
    def from_file(cls, path) -> "ReplaySampler":
        return cls(read_replay_file(path))

    def draw(self, skill: SkillType, cloud: PointCloud, scene: Scene, seed: int) -> SkillParams:
        matching = [r for r in self._records if r[0] is skill]
        if not matching:
            raise SamplerError(f"no replay records for skill {skill.value}")
        _, subgoal, parts = matching[_int_seed(seed) % len(matching)]
        contact = ContactPose(left=parts["left"], right=parts["right"])
        mask = None
        if parts["mask_indices"] is not None:
            mask = np.zeros(len(cloud), dtype=bool)
            valid = parts["mask_indices"][parts["mask_indices"] < len(cloud)]
            mask[valid] = True
        return SkillParams(subgoal, contact, mask)
