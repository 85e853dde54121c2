"""Buffer-based multi-step sampling planner.

Each skeleton step owns a buffer of nodes whose parameters were feasible.
The scheduler cycles the steps round-robin; a visit pops a random node from
the step's buffer (selection only, nodes stay addressable as parents), gates
it on the skill preconditions, and spends up to ``k_max`` parameter draws
looking for one feasible motion. The final step never samples a subgoal:
the residual needed to close the plan is computed from the popped node's
ancestry, and only the contact is drawn. Successful closure backtracks the
parent links and returns the plan.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .feasibility import WorkspaceModel, check_motion, refine_contact, satisfies_preconditions
from .geometry import (
    PointCloud,
    RigidTransform,
    apply,
    compose,
    compose_sequence,
    invert,
    project_se2,
    transform_distance,
)
from .samplers import RegistrationFailedError, SamplerError, SamplerInterface, SkillParams
from .scene import Scene
from .seeding import derive_rng, derive_seed
from .skills import (
    ArityError,
    ContactPose,
    NonPlanarSubgoalError,
    SkillType,
    generate_path,
    skill_admits,
)


class CorruptTreeError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanSkeleton:
    """The given ordered sequence of skill types; the planner fills in parameters."""

    steps: tuple[SkillType, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise ValueError("plan skeleton must have at least one step")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class PlannerConfig:
    k_max: int = 10
    time_budget: float = 300.0
    success_tolerance: tuple[float, float] = (0.03, math.radians(20.0))
    seed: int = 0
    max_visits: int | None = None
    """Optional deterministic cap on node visits. The wall-clock budget always
    applies; a visit cap makes failure statistics reproducible bit-for-bit."""

    def __post_init__(self):
        if self.k_max < 1 or self.time_budget <= 0:
            raise ValueError("k_max and time_budget must be positive")
        if self.success_tolerance[0] <= 0 or self.success_tolerance[1] <= 0:
            raise ValueError("success tolerance must be positive")


@dataclass(frozen=True, eq=False)
class PlanNode:
    """A search node: the cloud after this node's subgoal, plus the parent link."""

    cloud: PointCloud
    subgoal: RigidTransform
    contact: ContactPose | None
    parent: tuple[int, int] | None
    step: int
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class Plan:
    params: tuple[SkillParams, ...]
    predicted_clouds: tuple[PointCloud, ...]
    total_transform: RigidTransform
    skeleton: PlanSkeleton


@dataclass(frozen=True)
class VisitRecord:
    step: int
    draws: int
    outcome: str


@dataclass
class SearchStats:
    draws_per_step: list[int] = field(default_factory=list)
    samples_drawn: int = 0
    feasibility_checks: int = 0
    buffer_sizes: list[int] = field(default_factory=list)
    visits: list[VisitRecord] = field(default_factory=list)
    failure_counts: Counter = field(default_factory=Counter)
    elapsed: float = 0.0
    timed_out: bool = False


@dataclass(frozen=True)
class PlanResult:
    plan: Plan | None
    stats: SearchStats

    @property
    def success(self) -> bool:
        return self.plan is not None


def required_final_transform(ancestry_subgoals, t_des: RigidTransform) -> RigidTransform:
    """The residual subgoal that makes the executed product equal ``t_des``."""
    return compose(t_des, invert(compose_sequence(ancestry_subgoals)))


def _ancestry_subgoals(node: PlanNode, buffers) -> list[RigidTransform]:
    chain = []
    current = node
    while current.parent is not None:
        chain.append(current.subgoal)
        step, idx = current.parent
        current = buffers[step][idx]
    chain.reverse()
    return chain


def extract_plan(final_node: PlanNode, buffers, skeleton: PlanSkeleton) -> Plan:
    """Backtrack parent links from the final node to the root."""
    chain = [final_node]
    current = final_node
    while current.parent is not None:
        step, idx = current.parent
        if not (0 <= step < len(buffers)) or not (0 <= idx < len(buffers[step])):
            raise CorruptTreeError("corrupt tree")
        parent = buffers[step][idx]
        if parent.step != step:
            raise CorruptTreeError("corrupt tree")
        chain.append(parent)
        current = parent
    chain.reverse()
    if chain[0].parent is not None or len(chain) != len(skeleton) + 1:
        raise CorruptTreeError("corrupt tree")
    params = tuple(
        SkillParams(n.subgoal, n.contact, n.mask) for n in chain[1:]
    )
    clouds = tuple(n.cloud for n in chain)
    total = compose_sequence(p.subgoal for p in params)
    return Plan(params, clouds, total, skeleton)


def plan(
    observed: PointCloud,
    t_des: RigidTransform,
    skeleton: PlanSkeleton,
    sampler: SamplerInterface,
    ws: WorkspaceModel,
    cfg: PlannerConfig,
    scene: Scene | None = None,
) -> PlanResult:
    """Search for parameters realizing ``t_des`` along the skeleton.

    Returns a failure result (never raises) when the budget runs out.
    """
    if scene is None:
        scene = Scene(workspace=ws)
    n_steps = len(skeleton)
    stats = SearchStats(draws_per_step=[0] * n_steps)
    start = time.monotonic()
    deadline = start + cfg.time_budget

    root_cloud = sampler.begin_session(observed, scene, derive_seed(cfg.seed, "session"))
    root = PlanNode(root_cloud, RigidTransform.identity(), None, None, 0)
    buffers: list[list[PlanNode]] = [[] for _ in range(n_steps + 1)]
    buffers[0].append(root)

    def finish(found: Plan | None) -> PlanResult:
        stats.elapsed = time.monotonic() - start
        stats.buffer_sizes = [len(b) for b in buffers]
        return PlanResult(found, stats)

    visit = 0
    step = 0
    while True:
        if time.monotonic() >= deadline:
            stats.timed_out = True
            return finish(None)
        if cfg.max_visits is not None and visit >= cfg.max_visits:
            return finish(None)
        visit += 1
        skill = skeleton.steps[step]
        is_final = step == n_steps - 1

        if not buffers[step]:
            stats.visits.append(VisitRecord(step, 0, "empty"))
            step = (step + 1) % n_steps
            continue

        rng = derive_rng(cfg.seed, "visit", visit)
        node_idx = int(rng.integers(len(buffers[step])))
        node = buffers[step][node_idx]

        if not satisfies_preconditions(skill, node.cloud, ws):
            stats.failure_counts["precondition"] += 1
            stats.visits.append(VisitRecord(step, 0, "precondition"))
            step = (step + 1) % n_steps
            continue

        residual = None
        if is_final:
            residual = required_final_transform(_ancestry_subgoals(node, buffers), t_des)
            if not skill_admits(skill, residual, at=node.cloud.centroid()):
                stats.failure_counts["closure_inadmissible"] += 1
                stats.visits.append(VisitRecord(step, 0, "closure_inadmissible"))
                step = (step + 1) % n_steps
                continue
            if skill.planar:
                # a planar skill realizes the planar part; the sub-tolerance
                # roll/pitch/z remainder admitted above stays as pose error
                residual = project_se2(residual)

        child: PlanNode | None = None
        draws = 0
        for k in range(cfg.k_max):
            if time.monotonic() >= deadline:
                stats.timed_out = True
                stats.visits.append(VisitRecord(step, draws, "budget"))
                return finish(None)
            draws += 1
            stats.samples_drawn += 1
            stats.draws_per_step[step] += 1
            sample_seed = derive_seed(cfg.seed, "draw", visit, k)
            try:
                params = sampler.draw(skill, node.cloud, scene, sample_seed)
            except RegistrationFailedError:
                stats.failure_counts["registration"] += 1
                continue
            except SamplerError:
                stats.failure_counts["sampler"] += 1
                continue

            subgoal = residual if is_final else params.subgoal
            try:
                contact, _ = refine_contact(params.contact, node.cloud)
                path = generate_path(skill, contact, subgoal)
            except (ArityError, NonPlanarSubgoalError):
                stats.failure_counts["path_generation"] += 1
                continue
            stats.feasibility_checks += 1
            check = check_motion(path, node.cloud, subgoal, ws)
            if not check.ok:
                stats.failure_counts[f"stage{check.stage}_collision"] += 1
                continue

            child_cloud = apply(subgoal, node.cloud)
            sampler.notify_derived(node.cloud, child_cloud, subgoal)
            parent_ref = (step, node_idx)
            child = PlanNode(
                child_cloud,
                subgoal,
                contact,
                parent_ref,
                step + 1,
                None if is_final else params.mask,
            )
            break

        if child is None:
            stats.visits.append(VisitRecord(step, draws, "exhausted"))
            # a failed closure restarts the sweep so fresh roots keep arriving
            step = 0 if is_final else (step + 1) % n_steps
            continue

        buffers[step + 1].append(child)
        stats.visits.append(VisitRecord(step, draws, "feasible"))
        if is_final:
            found = extract_plan(child, buffers, skeleton)
            pos_err, rot_err = transform_distance(found.total_transform, t_des)
            if pos_err <= cfg.success_tolerance[0] and rot_err <= cfg.success_tolerance[1]:
                return finish(found)
            # closure was exact by construction; reaching here means the
            # tolerance itself is violated and the node should not count
            buffers[step + 1].pop()
            stats.failure_counts["closure_tolerance"] += 1
            step = 0
            continue
        step = (step + 1) % n_steps
