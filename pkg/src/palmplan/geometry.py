"""Rigid-body transforms, quaternion math, and point-cloud containers.

Conventions
-----------
- Quaternions are (w, x, y, z), unit norm, canonicalized to w >= 0 so that
  equality tests are well defined under the q == -q double cover.
- ``RigidTransform`` acts on points as ``p' = R p + t``.
- ``compose(a, b)`` applies ``b`` first, then ``a`` (matrix product A @ B).
- Lengths are meters, angles radians.

The quaternion helpers broadcast over leading dimensions, so batched
verification against matrix oracles stays cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_QUAT_NORM_TOL = 1e-9
_SMALL_ANGLE = 1e-10


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Quaternion helpers (wxyz, broadcastable)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-300):
        raise ValueError("cannot normalize zero quaternion")
    return q / norm


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is non-negative (q and -q are one rotation)."""
    q = np.asarray(q, dtype=np.float64)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qvec = q[..., 1:]
    uv = np.cross(qvec, v)
    uuv = np.cross(qvec, uv)
    return v + 2.0 * (q[..., :1] * uv + uuv)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Convert a single 3x3 rotation matrix to a canonical unit quaternion."""
    m = np.asarray(m, dtype=np.float64)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_canonical(quat_normalize(q))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm < 1e-300:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * float(angle)
    return quat_canonical(
        np.concatenate([[math.cos(half)], math.sin(half) * axis / norm])
    )


def quat_to_axis_angle(q: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (unit axis, angle in [0, pi]) of a single quaternion."""
    q = quat_canonical(quat_normalize(np.asarray(q, dtype=np.float64)))
    w = min(max(float(q[0]), -1.0), 1.0)
    angle = 2.0 * math.acos(w)
    s = math.sqrt(max(1.0 - w * w, 0.0))
    if s < _SMALL_ANGLE:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return q[1:] / s, angle


def quat_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle 2*acos(|<a,b>|) in [0, pi]; sign-flip invariant.

    Evaluated as 4*asin(min ||a -/+ b|| / 2), which is the same geodesic angle
    but keeps full precision near zero where acos of a near-unit dot cannot.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = min(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))
    return 4.0 * math.asin(min(d / 2.0, 1.0))


def quat_from_yaw(yaw: float) -> np.ndarray:
    return quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)


def yaw_of_quat(q: np.ndarray) -> float:
    """Yaw of the rotation: heading of the rotated x-axis in the world xy-plane."""
    m = quat_to_matrix(q)
    return math.atan2(m[1, 0], m[0, 0])


# ---------------------------------------------------------------------------
# RigidTransform
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RigidTransform:
    """An SE(3) element stored as (unit quaternion, translation)."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = quat_canonical(quat_normalize(q))
        assert abs(np.linalg.norm(q) - 1.0) < _QUAT_NORM_TOL
        object.__setattr__(self, "rotation", _freeze(q))
        object.__setattr__(self, "translation", _freeze(t))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        return cls(matrix_to_quat(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_rotation_matrix(cls, r: np.ndarray, t: np.ndarray | None = None) -> "RigidTransform":
        return cls(matrix_to_quat(r), np.zeros(3) if t is None else t)

    @classmethod
    def from_axis_angle(
        cls, axis: np.ndarray, angle: float, point: np.ndarray | None = None
    ) -> "RigidTransform":
        """Rotation about an axis; if ``point`` is given the axis passes through it."""
        q = quat_from_axis_angle(axis, angle)
        if point is None:
            return cls(q, np.zeros(3))
        p = np.asarray(point, dtype=np.float64)
        return cls(q, p - quat_rotate(q, p))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def apply_point(self, p: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(p, dtype=np.float64)) + self.translation

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(pts, dtype=np.float64)) + self.translation

    def rotate_vector(self, v: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(v, dtype=np.float64))

    def is_identity(self, rot_tol: float = 1e-9, trans_tol: float = 1e-9) -> bool:
        return (
            quat_angle_between(self.rotation, np.array([1.0, 0.0, 0.0, 0.0])) <= rot_tol
            and float(np.linalg.norm(self.translation)) <= trans_tol
        )

    def as_vector(self) -> np.ndarray:
        """(tx, ty, tz, qw, qx, qy, qz), the wire layout used by plan files."""
        return np.concatenate([self.translation, self.rotation])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "RigidTransform":
        v = np.asarray(v, dtype=np.float64).reshape(7)
        return cls(v[3:], v[:3])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a after b: (a o b)(p) = a(b(p))."""
    return RigidTransform(
        quat_multiply(a.rotation, b.rotation),
        quat_rotate(a.rotation, b.translation) + a.translation,
    )


def compose_sequence(transforms) -> RigidTransform:
    """Net transform of applying ``transforms`` in order (first applied first)."""
    total = RigidTransform.identity()
    for t in transforms:
        total = compose(t, total)
    return total


def invert(t: RigidTransform) -> RigidTransform:
    q_inv = quat_conjugate(t.rotation)
    return RigidTransform(q_inv, -quat_rotate(q_inv, t.translation))


def transform_distance(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(translation distance, rotation angle) between two transforms."""
    return (
        float(np.linalg.norm(a.translation - b.translation)),
        quat_angle_between(a.rotation, b.rotation),
    )


def project_se2(t: RigidTransform) -> RigidTransform:
    """Project to the table plane: keep yaw and planar translation, drop the rest."""
    yaw = yaw_of_quat(t.rotation)
    return RigidTransform(quat_from_yaw(yaw), np.array([t.translation[0], t.translation[1], 0.0]))


# ---------------------------------------------------------------------------
# Screw interpolation (one-parameter subgroup exp(f log T))
# ---------------------------------------------------------------------------

def _so3_log(q: np.ndarray) -> np.ndarray:
    axis, angle = quat_to_axis_angle(q)
    return axis * angle


def _v_matrix(omega: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(omega))
    k = _skew(omega)
    k2 = k @ k
    if angle < 1e-6:
        return np.eye(3) + 0.5 * k + k2 / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        + ((1.0 - math.cos(angle)) / a2) * k
        + ((angle - math.sin(angle)) / (a2 * angle)) * k2
    )


def _v_matrix_inv(omega: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(omega))
    k = _skew(omega)
    k2 = k @ k
    if angle < 1e-6:
        return np.eye(3) - 0.5 * k + k2 / 12.0
    half = 0.5 * angle
    cot_term = 1.0 - half * math.cos(half) / math.sin(half)
    return np.eye(3) - 0.5 * k + (cot_term / (angle * angle)) * k2


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def interpolate_screw(t: RigidTransform, fraction: float) -> RigidTransform:
    """The screw motion carrying identity to ``t``, stopped at ``fraction``.

    ``fraction=0`` is the identity and ``fraction=1`` is ``t`` exactly; the
    rotation advances by ``fraction`` of the axis-angle of ``t`` and the
    translation follows the matching screw so that equal fractions compose:
    ``interpolate_screw(t, a+b) == interpolate_screw(t, a) o interpolate_screw(t, b)``.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 0.0:
        return RigidTransform.identity()
    if fraction == 1.0:
        return t
    omega = _so3_log(t.rotation)
    rho = _v_matrix_inv(omega) @ t.translation
    scaled_omega = omega * fraction
    angle = float(np.linalg.norm(scaled_omega))
    if angle < _SMALL_ANGLE:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        q = quat_from_axis_angle(scaled_omega, angle)
    return RigidTransform(q, _v_matrix(scaled_omega) @ (rho * fraction))


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with optional per-point unit normals and boolean mask."""

    points: np.ndarray
    normals: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (N, 3) array")
        object.__setattr__(self, "points", _freeze(pts))
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError("normals must match points in shape")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", _freeze(nrm))
        if self.mask is not None:
            msk = np.asarray(self.mask, dtype=bool)
            if msk.shape != (pts.shape[0],):
                raise ValueError("mask must be a boolean vector matching points")
            msk = msk.copy()
            msk.setflags(write=False)
            object.__setattr__(self, "mask", msk)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, normals, self.mask)

    def with_mask(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, self.normals, mask)

    def select(self, indices) -> "PointCloud":
        return PointCloud(
            self.points[indices],
            None if self.normals is None else self.normals[indices],
            None if self.mask is None else self.mask[indices],
        )


def apply(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Transform a cloud rigidly; normals rotate, the mask is carried over."""
    pts = t.apply_points(cloud.points)
    nrm = None if cloud.normals is None else quat_rotate(t.rotation, cloud.normals)
    return PointCloud(pts, nrm, cloud.mask)


@dataclass(frozen=True, eq=False)
class CenteredCloud:
    """Zero-mean points with the centroid appended per row: (p - c) ++ c."""

    rows: np.ndarray
    centroid: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        c = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        if rows.ndim != 2 or rows.shape[1] != 6:
            raise ValueError("rows must be (N, 6)")
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "centroid", _freeze(c))


def center_and_augment(cloud: PointCloud) -> CenteredCloud:
    c = cloud.centroid()
    n = len(cloud)
    rows = np.hstack([cloud.points - c, np.tile(c, (n, 1))])
    return CenteredCloud(rows, c)


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def downsample_uniform(cloud: PointCloud, n: int, seed) -> PointCloud:
    """Uniform subsample without replacement (with replacement if n > |cloud|)."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = as_generator(seed)
    m = len(cloud)
    idx = rng.choice(m, size=n, replace=n > m)
    return cloud.select(idx)
