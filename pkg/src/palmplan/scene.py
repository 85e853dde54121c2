"""Tabletop scenes: support surfaces, virtual cameras, and cuboid objects."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .feasibility import Rect2D, WorkspaceModel
from .geometry import PointCloud, RigidTransform, _freeze, quat_to_matrix

# (axis, sign) outward normals of the six cuboid faces, in body frame
FACES: tuple[tuple[int, int], ...] = tuple(
    (axis, sign) for axis in range(3) for sign in (1, -1)
)


@dataclass(frozen=True, eq=False)
class Cuboid:
    half_extents: np.ndarray
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if np.any(he <= 0):
            raise ValueError("half extents must be positive")
        object.__setattr__(self, "half_extents", _freeze(he))

    def at(self, pose: RigidTransform) -> "Cuboid":
        return Cuboid(self.half_extents, pose)

    def corners_body(self) -> np.ndarray:
        he = self.half_extents
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
        )
        return signs * he

    def corners_world(self) -> np.ndarray:
        return self.pose.apply_points(self.corners_body())

    def face_normal_world(self, face: tuple[int, int]) -> np.ndarray:
        axis, sign = face
        return sign * quat_to_matrix(self.pose.rotation)[:, axis]

    def face_center_body(self, face: tuple[int, int]) -> np.ndarray:
        axis, sign = face
        center = np.zeros(3)
        center[axis] = sign * self.half_extents[axis]
        return center

    def face_area(self, face: tuple[int, int]) -> float:
        axis, _ = face
        others = [i for i in range(3) if i != axis]
        return float(4.0 * self.half_extents[others[0]] * self.half_extents[others[1]])

    def face_membership(self, points_world: np.ndarray, face: tuple[int, int], tol: float = 1e-6):
        """Boolean mask of world points lying on the given face plane."""
        axis, sign = face
        body = invert_points(self.pose, points_world)
        return np.abs(body[:, axis] - sign * self.half_extents[axis]) < tol

    def sample_face_points(self, face: tuple[int, int], count: int, rng) -> np.ndarray:
        """Uniform world-frame samples on one face."""
        axis, sign = face
        others = [i for i in range(3) if i != axis]
        body = np.empty((count, 3))
        body[:, axis] = sign * self.half_extents[axis]
        for o in others:
            body[:, o] = rng.uniform(-self.half_extents[o], self.half_extents[o], size=count)
        return self.pose.apply_points(body)


def invert_points(pose: RigidTransform, points_world: np.ndarray) -> np.ndarray:
    r = quat_to_matrix(pose.rotation)
    return (np.asarray(points_world, dtype=np.float64) - pose.translation) @ r


@dataclass(frozen=True)
class Shelf:
    """An elevated rectangular placement surface."""

    rect: Rect2D
    height: float


def _look_at(position: np.ndarray, target: np.ndarray) -> RigidTransform:
    z = target - position
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform.from_rotation_matrix(np.column_stack([x, y, z]), position)


@dataclass(frozen=True, eq=False)
class Scene:
    """A tabletop workspace with virtual depth cameras."""

    workspace: WorkspaceModel = field(default_factory=WorkspaceModel)
    camera_positions: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.55, 0.40, 0.60],
                [-0.55, 0.40, 0.60],
                [-0.55, -0.40, 0.60],
                [0.55, -0.40, 0.60],
            ]
        )
    )
    shelf: Shelf | None = None
    objects: tuple[Cuboid, ...] = ()

    def __post_init__(self):
        cams = np.atleast_2d(np.asarray(self.camera_positions, dtype=np.float64))
        if cams.shape[0] < 1 or cams.shape[1] != 3:
            raise ValueError("need at least one camera position")
        object.__setattr__(self, "camera_positions", _freeze(cams))

    @property
    def table(self) -> Rect2D:
        return self.workspace.table

    @property
    def table_height(self) -> float:
        return self.workspace.table_height

    def camera_poses(self) -> list[RigidTransform]:
        focal = np.array([*self.table.center, self.table_height])
        return [_look_at(p, focal) for p in self.camera_positions]

    def table_cloud(self, spacing: float = 0.01) -> PointCloud:
        return _surface_grid(self.table, self.table_height, spacing)

    def shelf_cloud(self, spacing: float = 0.01) -> PointCloud:
        if self.shelf is None:
            raise ValueError("scene has no shelf")
        return _surface_grid(self.shelf.rect, self.shelf.height, spacing)

    def support_cloud(self, surface: str = "table", spacing: float = 0.01) -> PointCloud:
        if surface == "table":
            return self.table_cloud(spacing)
        if surface == "shelf":
            return self.shelf_cloud(spacing)
        raise ValueError(f"unknown support surface {surface!r}")


def _surface_grid(rect: Rect2D, height: float, spacing: float) -> PointCloud:
    nx = max(int(round(2 * rect.half_extents[0] / spacing)) + 1, 2)
    ny = max(int(round(2 * rect.half_extents[1] / spacing)) + 1, 2)
    xs = np.linspace(rect.center[0] - rect.half_extents[0], rect.center[0] + rect.half_extents[0], nx)
    ys = np.linspace(rect.center[1] - rect.half_extents[1], rect.center[1] + rect.half_extents[1], ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, height)])
    return PointCloud(pts)


def default_scene(shelf_height: float | None = None) -> Scene:
    shelf = None
    if shelf_height is not None:
        shelf = Shelf(Rect2D((0.0, 0.25), (0.30, 0.12)), shelf_height)
    return Scene(shelf=shelf)
