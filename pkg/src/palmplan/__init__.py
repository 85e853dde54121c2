"""palmplan: multi-step manipulation planning for rigid objects from point clouds."""

from .geometry import (
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
from .cloudproc import (
    IcpResult,
    NoOverlapError,
    Plane,
    estimate_normals,
    icp_point_to_point,
    knn,
    segment_planes,
)
from .skills import (
    ContactPose,
    PalmPath,
    Phase,
    SkillType,
    execute_sticking,
    generate_path,
    skill_admits,
)
from .feasibility import (
    Rect2D,
    WorkspaceModel,
    feasible_motion,
    refine_contact,
    satisfies_preconditions,
)
from .scene import Cuboid, Scene, Shelf, default_scene
from .samplers import (
    BaselineSampler,
    ReplaySampler,
    SamplerInterface,
    SkillParams,
    baseline_grasp_sampler,
    baseline_pull_sampler,
    baseline_push_sampler,
    register_mask_subgoal,
)
from .planner import (
    Plan,
    PlanNode,
    PlannerConfig,
    PlanResult,
    PlanSkeleton,
    extract_plan,
    plan,
    required_final_transform,
)
from .simulation import (
    TrainingSample,
    TrialReport,
    add_depth_noise,
    evaluate_multistep,
    evaluate_single_step,
    execute_plan,
    generate_task,
    generate_training_data,
    orientation_error,
    sample_stable_pose,
    synthesize_cloud,
)
from .ply import read_ply, write_ply

__version__ = "0.1.0"
