"""Quasi-static evaluation harness.

Generates cuboid scenes and synthetic depth clouds, executes plans under the
sticking-contact model, produces training tuples for learned samplers, and
runs the single-step and multi-step evaluation protocols with deterministic
per-trial seed streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import skills
from .feasibility import check_motion, refine_contact, satisfies_preconditions
from .geometry import (
    PointCloud,
    RigidTransform,
    compose,
    invert,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_multiply,
    quat_to_matrix,
    transform_distance,
)
from .planner import Plan, PlannerConfig, PlanResult, PlanSkeleton, plan as run_planner
from .samplers import SamplerError, SamplerInterface, SkillParams
from .scene import FACES, Cuboid, Scene
from .seeding import derive_rng, derive_seed
from .skills import ContactPose, SkillType, generate_path
from .samplers import _palm_pose as _sample_palm_pose
from .samplers import GRASP_FRONT_Z_RANGE as _GRASP_FRONT, PUSH_FRONT_Z_RANGE as _PUSH_FRONT

MASK_DISTANCE_THRESHOLD = 0.01
SETTLE_MAX_TILT = math.radians(5.0)
DEFAULT_DENSE_POINTS = 1200
OBJECT_HALF_EXTENT_RANGE = (0.025, 0.06)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def orientation_error(q_a: np.ndarray, q_b: np.ndarray) -> tuple[float, float]:
    """Sign-invariant rotation discrepancy: (1 - <qa,qb>^2, geodesic angle)."""
    dot = float(np.dot(np.asarray(q_a, float), np.asarray(q_b, float)))
    loss = 1.0 - dot * dot
    angle = 2.0 * math.acos(min(abs(dot), 1.0))
    return loss, angle


# ---------------------------------------------------------------------------
# Stable poses
# ---------------------------------------------------------------------------

def stable_orientations() -> list[tuple[tuple[int, int], np.ndarray]]:
    """(face, quaternion) pairs putting each cuboid face flat on the table."""
    x, y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    return [
        ((0, 1), quat_from_axis_angle(y, math.pi / 2)),
        ((0, -1), quat_from_axis_angle(y, -math.pi / 2)),
        ((1, 1), quat_from_axis_angle(x, -math.pi / 2)),
        ((1, -1), quat_from_axis_angle(x, math.pi / 2)),
        ((2, 1), quat_from_axis_angle(x, math.pi)),
        ((2, -1), np.array([1.0, 0, 0, 0])),
    ]


def _footprint_margin(cuboid: Cuboid, down_axis: int) -> float:
    others = [i for i in range(3) if i != down_axis]
    return math.hypot(cuboid.half_extents[others[0]], cuboid.half_extents[others[1]])


def _stable_pose(
    cuboid: Cuboid,
    scene: Scene,
    face_index: int,
    yaw: float,
    xy: np.ndarray,
) -> RigidTransform:
    face, base_q = stable_orientations()[face_index]
    q = quat_multiply(quat_from_yaw(yaw), base_q)
    z = scene.table_height + float(cuboid.half_extents[face[0]])
    return RigidTransform(q, np.array([xy[0], xy[1], z]))


def _rng_for(seed, label: str) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(int(seed), label)


def sample_stable_pose(cuboid: Cuboid, scene: Scene, seed, region=None) -> RigidTransform:
    """Uniform face, yaw, and planar position; the chosen face rests exactly flat."""
    rng = _rng_for(seed, "stable_pose")
    face_index = int(rng.integers(6))
    face, _ = stable_orientations()[face_index]
    yaw = rng.uniform(-math.pi, math.pi)
    rect = region if region is not None else scene.table
    margin = _footprint_margin(cuboid, face[0])
    half = np.maximum(rect.half_extents - margin, 0.005)
    xy = rng.uniform(rect.center - half, rect.center + half)
    return _stable_pose(cuboid, scene, face_index, yaw, xy)


def resting_face(pose: RigidTransform) -> tuple[tuple[int, int], float]:
    """The body face closest to pointing down, and its tilt from flat."""
    r = quat_to_matrix(pose.rotation)
    best = None
    best_dot = -2.0
    for axis, sign in FACES:
        d = float(-sign * r[2, axis])  # alignment of outward normal with -z
        if d > best_dot:
            best_dot = d
            best = (axis, sign)
    return best, math.acos(min(max(best_dot, -1.0), 1.0))


# ---------------------------------------------------------------------------
# Cloud synthesis and sensor noise
# ---------------------------------------------------------------------------

def synthesize_cloud(
    scene: Scene, obj: Cuboid, points: int = DEFAULT_DENSE_POINTS, seed=0
) -> PointCloud:
    """Area-weighted surface samples over the camera-facing cuboid faces."""
    if points < 100:
        raise ValueError("points must be >= 100")
    rng = _rng_for(seed, "cloud")
    cams = scene.camera_positions
    visible = []
    for face in FACES:
        n_w = obj.face_normal_world(face)
        center_w = obj.pose.apply_point(obj.face_center_body(face))
        if np.any((cams - center_w) @ n_w > 0.0):
            visible.append(face)
    if not visible:
        raise ValueError("object is invisible to every camera")
    areas = np.array([obj.face_area(f) for f in visible])
    counts = rng.multinomial(points, areas / areas.sum())
    chunks = [
        obj.sample_face_points(face, int(c), rng)
        for face, c in zip(visible, counts)
        if c > 0
    ]
    return PointCloud(np.vstack(chunks))


def add_depth_noise(cloud: PointCloud, scene: Scene, a: float, b: float, seed=0) -> PointCloud:
    """Gaussian range noise along each point's camera ray, sigma = a + b z^2."""
    if a < 0 or b < 0:
        raise ValueError("noise coefficients must be non-negative")
    if a == 0.0 and b == 0.0:
        return cloud
    rng = _rng_for(seed, "noise")
    cams = scene.camera_positions
    # each point is attributed to its nearest camera
    d2 = ((cloud.points[:, None, :] - cams[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    rays = cloud.points - cams[nearest]
    depth = np.linalg.norm(rays, axis=1)
    rays = rays / depth[:, None]
    sigma = a + b * depth**2
    eps = rng.normal(0.0, 1.0, size=len(cloud)) * sigma
    return PointCloud(cloud.points + eps[:, None] * rays, None, cloud.mask)


# ---------------------------------------------------------------------------
# Plan execution
# ---------------------------------------------------------------------------

def settle_pose(pose: RigidTransform, cuboid: Cuboid, scene: Scene) -> RigidTransform:
    """Snap to the nearest stable pose when the resting face is almost flat."""
    (axis, sign), tilt = resting_face(pose)
    if tilt > SETTLE_MAX_TILT:
        return pose
    r = quat_to_matrix(pose.rotation)
    down_now = sign * r[:, axis]
    target = np.array([0.0, 0.0, -1.0])
    rot_axis = np.cross(down_now, target)
    if np.linalg.norm(rot_axis) > 1e-12 and tilt > 1e-12:
        correction = RigidTransform.from_axis_angle(rot_axis, tilt, point=pose.translation)
        pose = compose(correction, pose)
    z = scene.table_height + float(cuboid.half_extents[axis])
    return RigidTransform(pose.rotation, np.array([pose.translation[0], pose.translation[1], z]))


def execute_plan(
    plan: Plan | list[SkillParams], scene: Scene, obj: Cuboid, settle: bool = False
) -> RigidTransform:
    """Idealized quasi-static execution: each subgoal moves the object exactly."""
    params = plan.params if isinstance(plan, Plan) else plan
    pose = obj.pose
    for p in params:
        pose = compose(p.subgoal, pose)
    if settle:
        pose = settle_pose(pose, obj, scene)
    return pose


# ---------------------------------------------------------------------------
# Training data generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingSample:
    cloud: PointCloud
    subgoal: RigidTransform
    contact: ContactPose
    mask: np.ndarray
    skill: SkillType


def _random_cuboid(rng) -> Cuboid:
    return Cuboid(rng.uniform(*OBJECT_HALF_EXTENT_RANGE, size=3))


def _mesh_pull_contact(obj: Cuboid, rng) -> ContactPose:
    # the face currently pointing up
    (axis, sign), _ = resting_face(obj.pose)
    top = (axis, -sign)
    point = obj.sample_face_points(top, 1, rng)[0]
    pose = _sample_palm_pose(point, np.array([0.0, 0.0, -1.0]), rng)
    return ContactPose(right=pose)


def _mesh_push_contact(obj: Cuboid, direction_xy: np.ndarray, rng) -> ContactPose | None:
    """Contact on the side face whose outward normal opposes the push direction."""
    direction = np.array([direction_xy[0], direction_xy[1], 0.0])
    norm = np.linalg.norm(direction)
    if norm < 1e-9:
        return None
    direction = direction / norm
    best, best_dot = None, 0.0
    for face in FACES:
        n_w = obj.face_normal_world(face)
        if abs(n_w[2]) > 0.5:
            continue
        d = float(n_w @ -direction)
        if d > best_dot:
            best, best_dot = face, d
    if best is None:
        return None
    point = obj.sample_face_points(best, 1, rng)[0]
    pose = _sample_palm_pose(point, -obj.face_normal_world(best), rng, front_z_range=_PUSH_FRONT)
    return ContactPose(right=pose)


def _mesh_grasp_contact(obj: Cuboid, goal_down_axis: int, rng) -> ContactPose | None:
    (down_axis, _), _ = resting_face(obj.pose)
    pair_axes = [i for i in range(3) if i != down_axis and i != goal_down_axis]
    if not pair_axes:
        return None
    axis = int(rng.choice(pair_axes))
    body = rng.uniform(-obj.half_extents, obj.half_extents)
    body[axis] = obj.half_extents[axis]
    p1 = obj.pose.apply_point(body)
    body[axis] = -obj.half_extents[axis]
    p2 = obj.pose.apply_point(body)
    n1 = obj.face_normal_world((axis, 1))
    pose1 = _sample_palm_pose(p1, -n1, rng, front_z_range=_GRASP_FRONT)
    pose2 = _sample_palm_pose(p2, n1, rng, front_z_range=_GRASP_FRONT)
    if p1[0] <= p2[0]:
        return ContactPose(left=pose1, right=pose2)
    return ContactPose(left=pose2, right=pose1)


def generate_training_data(
    n_objects: int,
    n_samples: int,
    skill: SkillType,
    scene: Scene,
    seed: int = 0,
) -> list[TrainingSample]:
    """Sample stable-pose transitions and mesh contacts, keep the feasible ones.

    ``n_samples`` counts attempts; the yield is typically smaller and every
    emitted tuple re-passes the same feasibility predicates the planner uses.
    """
    if n_objects < 1 or n_samples < 1:
        raise ValueError("counts must be positive")
    ws = scene.workspace
    pool_rng = derive_rng(seed, "objects")
    pool = [_random_cuboid(pool_rng) for _ in range(n_objects)]
    out: list[TrainingSample] = []
    orientations = stable_orientations()
    for attempt in range(n_samples):
        rng = derive_rng(seed, "sample", attempt)
        obj = pool[attempt % n_objects].at(RigidTransform.identity())
        start = sample_stable_pose(obj, scene, rng, region=ws.precondition_region(skill))
        obj = obj.at(start)

        start_face = resting_face(start)[0]
        if skill.bimanual and skill is not SkillType.PICK_PLACE:
            goal_face_index = int(rng.integers(6))
            goal_face = orientations[goal_face_index][0]
            if goal_face[0] == start_face[0]:
                continue  # reorientation must change the resting face
        else:
            goal_face_index = next(i for i, (f, _) in enumerate(orientations) if f == start_face)
            goal_face = start_face
        margin = _footprint_margin(obj, goal_face[0])
        rect = scene.table
        half = np.maximum(rect.half_extents - margin, 0.005)
        goal_xy = rng.uniform(rect.center - half, rect.center + half)
        goal = _stable_pose(obj, scene, goal_face_index, rng.uniform(-math.pi, math.pi), goal_xy)
        subgoal = compose(goal, invert(start))

        if skill.bimanual:
            contact = _mesh_grasp_contact(obj, goal_face[0], rng)
        elif skill in (SkillType.PUSH_LEFT, SkillType.PUSH_RIGHT):
            contact = _mesh_push_contact(obj, goal_xy - start.translation[:2], rng)
        else:
            contact = _mesh_pull_contact(obj, rng)
        if contact is None:
            continue
        if skill.arm == "left":
            contact = ContactPose(left=contact.right, left_normal=contact.right_normal)

        if not skills.skill_admits(skill, subgoal):
            continue
        cloud = synthesize_cloud(scene, obj, seed=rng)
        if not satisfies_preconditions(skill, cloud, ws):
            continue
        try:
            path = generate_path(skill, contact, subgoal)
        except (skills.ArityError, skills.NonPlanarSubgoalError):
            continue
        if not check_motion(path, cloud, subgoal, ws).ok:
            continue
        final = execute_plan([SkillParams(subgoal, contact)], scene, obj)
        pos_err, rot_err = transform_distance(final, compose(subgoal, start))
        if pos_err > 0.03 or rot_err > math.radians(20.0):
            continue
        moved_z = subgoal.apply_points(cloud.points)[:, 2]
        mask = moved_z - scene.table_height <= MASK_DISTANCE_THRESHOLD
        out.append(TrainingSample(cloud, subgoal, contact, mask, skill))
    return out


# ---------------------------------------------------------------------------
# Task generation for evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Task:
    cuboid: Cuboid
    start: RigidTransform
    t_des: RigidTransform
    witness: tuple[RigidTransform, ...]


def generate_task(skeleton: PlanSkeleton, cuboid: Cuboid, scene: Scene, seed: int) -> Task:
    """Compose a goal transform from stable-pose transitions matching the skeleton.

    Each step's witness transition respects the step's motion class and keeps
    the object inside the precondition region of the following step, so the
    task is solvable by construction. The witness is for debugging only.
    """
    rng = derive_rng(seed, "task")
    ws = scene.workspace
    comfort = ws.grasp_region

    def region_for(step_idx: int):
        if step_idx < len(skeleton) and skeleton.steps[step_idx].bimanual:
            return ws.grasp_region
        return comfort

    start = sample_stable_pose(cuboid, scene, rng, region=region_for(0))
    poses = [start]
    for t, skill in enumerate(skeleton.steps):
        current = poses[-1]
        face_now = resting_face(current)[0]
        orientations = stable_orientations()
        if skill.bimanual and skill is not SkillType.PICK_PLACE:
            choices = [i for i, (f, _) in enumerate(orientations) if f[0] != face_now[0]]
        else:
            choices = [i for i, (f, _) in enumerate(orientations) if f == face_now]
        face_index = int(rng.choice(choices))
        rect = region_for(t + 1)
        margin = _footprint_margin(cuboid, orientations[face_index][0][0])
        half = np.maximum(rect.half_extents - margin, 0.005)
        xy = rng.uniform(rect.center - half, rect.center + half)
        yaw = rng.uniform(-math.pi, math.pi)
        poses.append(_stable_pose(cuboid, scene, face_index, yaw, xy))
    t_des = compose(poses[-1], invert(poses[0]))
    return Task(cuboid.at(start), start, t_des, tuple(poses))


# ---------------------------------------------------------------------------
# Multi-step evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrialReport:
    skeleton: str
    trial: int
    object_half_extents: tuple[float, float, float]
    found: bool
    success: bool
    position_error: float
    orientation_loss: float
    orientation_angle: float
    planning_time: float
    samples_drawn: int
    feasibility_checks: int
    failure_category: str | None

    def record(self) -> str:
        """Deterministic serialization; wall-clock timing is kept out so that
        reruns with one master seed are byte-identical."""
        payload = {
            "skeleton": self.skeleton,
            "trial": self.trial,
            "object_half_extents": list(self.object_half_extents),
            "found": self.found,
            "success": self.success,
            "position_error": self.position_error,
            "orientation_loss": self.orientation_loss,
            "orientation_angle": self.orientation_angle,
            "samples_drawn": self.samples_drawn,
            "feasibility_checks": self.feasibility_checks,
            "failure_category": self.failure_category,
        }
        return json.dumps(payload, sort_keys=True)


def _failure_category(result: PlanResult, success: bool) -> str | None:
    if result.success and success:
        return None
    if result.success:
        return "feasibility"
    stats = result.stats
    outcomes = {v.outcome for v in stats.visits}
    if outcomes and outcomes <= {"precondition", "empty"}:
        return "precondition"
    if stats.samples_drawn > 0 and stats.failure_counts["registration"] > 0.5 * stats.samples_drawn:
        return "registration"
    return "timeout"


@dataclass
class SkeletonAggregate:
    skeleton: str
    trials: int = 0
    successes: int = 0
    found: int = 0
    position_errors: list[float] = field(default_factory=list)
    orientation_angles: list[float] = field(default_factory=list)
    planning_times: list[float] = field(default_factory=list)
    failure_histogram: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def summary(self) -> dict:
        return {
            "skeleton": self.skeleton,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "mean_position_error": _mean(self.position_errors),
            "mean_orientation_angle": _mean(self.orientation_angles),
            "mean_planning_time": _mean(self.planning_times),
            "failure_histogram": dict(sorted(self.failure_histogram.items())),
        }


def _mean(values) -> float | None:
    return float(np.mean(values)) if values else None


@dataclass
class EvaluationReport:
    trials: list[TrialReport]
    aggregates: dict[str, SkeletonAggregate]

    def record_lines(self) -> list[str]:
        return [t.record() for t in self.trials]

    def summary(self) -> dict:
        return {
            "overall_success_rate": (
                sum(t.success for t in self.trials) / len(self.trials) if self.trials else 0.0
            ),
            "per_skeleton": [agg.summary() for agg in self.aggregates.values()],
        }


def _skeleton_letters(skeleton: PlanSkeleton) -> str:
    letters = {"pull": "p", "push": "s", "grasp_reorient": "g", "pick_place": "k"}
    return "".join(letters[s.value.rsplit("_", 1)[0] if not s.bimanual else s.value] for s in skeleton.steps)


def run_trial(
    skeleton: PlanSkeleton,
    cuboid: Cuboid,
    sampler: SamplerInterface,
    cfg: PlannerConfig,
    scene: Scene,
    trial_seed: int,
    trial_index: int,
    noise: tuple[float, float] | None = None,
    dense_points: int = DEFAULT_DENSE_POINTS,
) -> TrialReport:
    task = generate_task(skeleton, cuboid, scene, derive_seed(trial_seed, "goal"))
    obj = task.cuboid
    cloud = synthesize_cloud(scene, obj, dense_points, derive_seed(trial_seed, "cloud"))
    if noise is not None:
        cloud = add_depth_noise(cloud, scene, noise[0], noise[1], derive_seed(trial_seed, "noise"))
    cfg_trial = replace(cfg, seed=derive_seed(trial_seed, "planner"))
    result = run_planner(cloud, task.t_des, skeleton, sampler, scene.workspace, cfg_trial, scene)

    desired = compose(task.t_des, task.start)
    if result.success:
        final = execute_plan(result.plan, scene, obj)
        pos_err, _ = transform_distance(final, desired)
        loss, angle = orientation_error(final.rotation, desired.rotation)
    else:
        pos_err, loss, angle = math.inf, 1.0, math.pi
    success = (
        result.success
        and pos_err <= cfg.success_tolerance[0]
        and angle <= cfg.success_tolerance[1]
    )
    return TrialReport(
        skeleton=_skeleton_letters(skeleton),
        trial=trial_index,
        object_half_extents=tuple(float(v) for v in cuboid.half_extents),
        found=result.success,
        success=bool(success),
        position_error=float(pos_err),
        orientation_loss=float(loss),
        orientation_angle=float(angle),
        planning_time=result.stats.elapsed,
        samples_drawn=result.stats.samples_drawn,
        feasibility_checks=result.stats.feasibility_checks,
        failure_category=_failure_category(result, success),
    )


def evaluate_multistep(
    n_objects: int,
    skeletons: list[PlanSkeleton],
    trials_per_skeleton: int,
    sampler: SamplerInterface,
    cfg: PlannerConfig,
    scene: Scene,
    seed: int = 0,
    noise: tuple[float, float] | None = None,
    dense_points: int = DEFAULT_DENSE_POINTS,
) -> EvaluationReport:
    """The multi-step protocol: fresh object + solvable goal per trial."""
    if n_objects < 1 or trials_per_skeleton < 1:
        raise ValueError("counts must be positive")
    pool_rng = derive_rng(seed, "objects")
    pool = [_random_cuboid(pool_rng) for _ in range(n_objects)]
    trials: list[TrialReport] = []
    aggregates: dict[str, SkeletonAggregate] = {}
    for skel_idx, skeleton in enumerate(skeletons):
        name = _skeleton_letters(skeleton)
        agg = aggregates.setdefault(name, SkeletonAggregate(name))
        for t in range(trials_per_skeleton):
            cuboid = pool[t % n_objects]
            trial_seed = derive_seed(seed, "trial", skel_idx, t)
            report = run_trial(
                skeleton, cuboid, sampler, cfg, scene, trial_seed, t, noise, dense_points
            )
            trials.append(report)
            agg.trials += 1
            agg.found += int(report.found)
            agg.successes += int(report.success)
            if report.found:
                agg.planning_times.append(report.planning_time)
            if report.success:
                agg.position_errors.append(report.position_error)
                agg.orientation_angles.append(report.orientation_angle)
            if report.failure_category:
                agg.failure_histogram[report.failure_category] = (
                    agg.failure_histogram.get(report.failure_category, 0) + 1
                )
    return EvaluationReport(trials, aggregates)


# ---------------------------------------------------------------------------
# Single-step protocol
# ---------------------------------------------------------------------------

@dataclass
class SingleStepBreakdown:
    skill: str
    trials: int = 0
    feasible: int = 0
    successes: int = 0
    position_errors: list[float] = field(default_factory=list)
    orientation_losses: list[float] = field(default_factory=list)
    orientation_angles: list[float] = field(default_factory=list)
    attempts_used: list[int] = field(default_factory=list)

    @property
    def feasibility_success_rate(self) -> float:
        return self.feasible / self.trials if self.trials else 0.0

    @property
    def sticking_success_rate(self) -> float:
        # contact never slips in this idealized execution model
        return 1.0 if self.trials else 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def summary(self) -> dict:
        return {
            "skill": self.skill,
            "trials": self.trials,
            "feasibility_success_rate": self.feasibility_success_rate,
            "sticking_success_rate": self.sticking_success_rate,
            "success_rate": self.success_rate,
            "mean_position_error": _mean(self.position_errors),
            "mean_orientation_loss": _mean(self.orientation_losses),
            "mean_orientation_angle": _mean(self.orientation_angles),
            "mean_attempts": _mean(self.attempts_used),
        }


def evaluate_single_step(
    n_objects: int,
    poses_per_object: int,
    skill_types: list[SkillType],
    sampler: SamplerInterface,
    scene: Scene,
    seed: int = 0,
    max_attempts: int = 15,
    tolerance: tuple[float, float] = (0.03, math.radians(20.0)),
    noise: tuple[float, float] | None = None,
    dense_points: int = DEFAULT_DENSE_POINTS,
) -> dict[str, SingleStepBreakdown]:
    """Per-skill breakdown: draw up to ``max_attempts`` parameter samples per
    trial, execute the first feasible one (with settling), and score against
    the sample's own subgoal. Objects spawn in the bimanual precondition
    region so every skill can legitimately be attempted at every pose."""
    ws = scene.workspace
    pool_rng = derive_rng(seed, "objects")
    pool = [_random_cuboid(pool_rng) for _ in range(n_objects)]
    out: dict[str, SingleStepBreakdown] = {}
    for skill in skill_types:
        breakdown = out.setdefault(skill.value, SingleStepBreakdown(skill.value))
        for obj_idx, base in enumerate(pool):
            for pose_idx in range(poses_per_object):
                trial_seed = derive_seed(seed, "single", skill.value, obj_idx, pose_idx)
                rng = derive_rng(trial_seed, "pose")
                start = sample_stable_pose(base, scene, rng, region=ws.grasp_region)
                obj = base.at(start)
                cloud = synthesize_cloud(scene, obj, dense_points, derive_seed(trial_seed, "cloud"))
                if noise is not None:
                    cloud = add_depth_noise(
                        cloud, scene, noise[0], noise[1], derive_seed(trial_seed, "noise")
                    )
                cloud = sampler.begin_session(cloud, scene, derive_seed(trial_seed, "session"))
                breakdown.trials += 1
                if not satisfies_preconditions(skill, cloud, ws):
                    continue
                chosen: SkillParams | None = None
                for k in range(max_attempts):
                    try:
                        params = sampler.draw(
                            skill, cloud, scene, derive_seed(trial_seed, "draw", k)
                        )
                        contact, _ = refine_contact(params.contact, cloud)
                        path = generate_path(skill, contact, params.subgoal)
                    except (SamplerError, skills.ArityError, skills.NonPlanarSubgoalError):
                        continue
                    if check_motion(path, cloud, params.subgoal, ws).ok:
                        chosen = SkillParams(params.subgoal, contact, params.mask)
                        breakdown.attempts_used.append(k + 1)
                        break
                if chosen is None:
                    continue
                breakdown.feasible += 1
                final = execute_plan([chosen], scene, obj, settle=True)
                desired = compose(chosen.subgoal, start)
                pos_err, _ = transform_distance(final, desired)
                loss, angle = orientation_error(final.rotation, desired.rotation)
                breakdown.position_errors.append(float(pos_err))
                breakdown.orientation_losses.append(float(loss))
                breakdown.orientation_angles.append(float(angle))
                if pos_err <= tolerance[0] and angle <= tolerance[1]:
                    breakdown.successes += 1
    return out
