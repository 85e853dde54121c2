"""Geometric perception over raw clouds: neighbors, normals, planes, ICP.

Registration is plain point-to-point ICP with a closed-form SVD update and
distance-threshold correspondence rejection; plane extraction is sequential
RANSAC with a fixed, seed-reproducible hypothesis budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    PointCloud,
    RigidTransform,
    _freeze,
    as_generator,
    compose,
    matrix_to_quat,
)
from . import ply as _ply

DEFAULT_INLIER_THRESHOLD = 0.005
DEFAULT_NORMAL_K = 16
DEFAULT_MAX_CORR_DIST = 0.02
DEFAULT_MAX_ITERS = 50
DEFAULT_REL_RMSE_TOL = 1e-6

# Sequential-RANSAC hypothesis budget: 99.9% confidence of hitting an
# all-inlier triple at an assumed 25% inlier fraction, hard-capped.
RANSAC_CONFIDENCE = 0.999
RANSAC_ASSUMED_INLIER_FRACTION = 0.25
RANSAC_MAX_ITERATIONS = 2000


class NoOverlapError(RuntimeError):
    """ICP found zero correspondences at the initial transform."""

    def __init__(self, init: RigidTransform):
        super().__init__("no overlap")
        self.init = init


@dataclass(frozen=True, eq=False)
class Plane:
    """n . p = offset, with the supporting inlier indices of the source cloud."""

    normal: np.ndarray
    offset: float
    inlier_indices: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            n = n / norm
        object.__setattr__(self, "normal", _freeze(n))
        idx = np.asarray(self.inlier_indices, dtype=np.intp).copy()
        idx.setflags(write=False)
        object.__setattr__(self, "inlier_indices", idx)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def transformed(self, t: RigidTransform) -> "Plane":
        n = t.rotate_vector(self.normal)
        return Plane(n, self.offset + float(n @ t.translation), self.inlier_indices)


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    fitness: float
    rmse: float
    iterations: int
    rmse_history: tuple[float, ...]

    def __post_init__(self):
        assert 0.0 <= self.fitness <= 1.0
        assert self.rmse >= 0.0
        assert self.iterations >= 1


def knn(cloud: PointCloud, query: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest points, ascending distance, ties to lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(cloud):
        raise ValueError("insufficient points")
    d2 = np.einsum("ij,ij->i", cloud.points - query, cloud.points - query)
    order = np.lexsort((np.arange(len(cloud)), d2))
    return order[:k]


def estimate_normals(
    cloud: PointCloud,
    k: int = DEFAULT_NORMAL_K,
    view_points: np.ndarray | None = None,
) -> PointCloud:
    """Per-point PCA normals over k neighbors, consistently oriented outward.

    Sign disambiguation: point away from the cloud centroid, which is correct
    for convex bodies viewed from anywhere; where that signal is weak (flat,
    plane-like clouds) fall back to facing the best-aligned viewpoint.
    Camera positions alone cannot orient a merged multi-view cloud: for an
    off-center object the camera nearest to a point often sits behind its
    face. A neighborhood whose covariance is rank-deficient (collinear
    points) gets the normal of its nearest well-conditioned neighbor.
    """
    n = len(cloud)
    if not 3 <= k <= n:
        raise ValueError("need 3 <= k <= |cloud|")
    pts = cloud.points
    tree = cKDTree(pts)
    _, nbr = tree.query(pts, k=k)
    nbr_pts = pts[nbr]
    centered = nbr_pts - nbr_pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]
    # rank < 2 when the two smallest eigenvalues both vanish relative to the largest
    scale = np.maximum(eigvals[:, 2], 1e-300)
    degenerate = eigvals[:, 1] / scale < 1e-8

    outward = pts - pts.mean(axis=0)
    radius = np.linalg.norm(outward, axis=1)
    support = np.einsum("ij,ij->i", normals, outward) / np.maximum(radius, 1e-12)
    weak = np.abs(support) < 0.1
    normals[support < 0.0] *= -1.0

    if weak.any():
        if view_points is None:
            cameras = np.array([[0.0, 0.0, 1e6]])
        else:
            cameras = np.atleast_2d(np.asarray(view_points, dtype=np.float64))
        to_cams = cameras[None, :, :] - pts[weak, None, :]
        to_cams /= np.linalg.norm(to_cams, axis=2, keepdims=True)
        align = np.einsum("ij,icj->ic", normals[weak], to_cams)
        best = np.argmax(np.abs(align), axis=1)
        flip = align[np.arange(len(best)), best] < 0.0
        idx = np.flatnonzero(weak)
        normals[idx[flip]] *= -1.0

    if degenerate.any():
        good = np.flatnonzero(~degenerate)
        if good.size == 0:
            raise ValueError("every neighborhood is degenerate")
        good_tree = cKDTree(pts[good])
        _, sub = good_tree.query(pts[degenerate], k=1)
        normals[degenerate] = normals[good[sub]]

    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return cloud.with_normals(normals)


def ransac_iterations(
    confidence: float = RANSAC_CONFIDENCE,
    inlier_fraction: float = RANSAC_ASSUMED_INLIER_FRACTION,
    cap: int = RANSAC_MAX_ITERATIONS,
) -> int:
    raw = math.log(1.0 - confidence) / math.log(1.0 - inlier_fraction**3)
    return min(int(math.ceil(raw)), cap)


def _fit_plane_least_squares(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1]
    return normal, float(normal @ centroid)


def segment_planes(
    cloud: PointCloud,
    inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
    min_inliers: int = 30,
    max_planes: int = 6,
    seed=0,
) -> list[Plane]:
    """Sequential RANSAC: fit the largest plane, remove its inliers, repeat."""
    if inlier_threshold <= 0:
        raise ValueError("inlier_threshold must be positive")
    if min_inliers < 3:
        raise ValueError("min_inliers must be >= 3")
    rng = as_generator(seed)
    budget = ransac_iterations()
    remaining = np.arange(len(cloud))
    planes: list[Plane] = []
    while len(planes) < max_planes and remaining.size >= min_inliers:
        pts = cloud.points[remaining]
        best_count = 0
        best_inliers = None
        for _ in range(budget):
            tri = pts[rng.choice(remaining.size, size=3, replace=False)]
            n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            norm = np.linalg.norm(n)
            if norm < 1e-12:
                continue
            n = n / norm
            dist = np.abs(pts @ n - n @ tri[0])
            inliers = dist <= inlier_threshold
            count = int(inliers.sum())
            if count > best_count:
                best_count = count
                best_inliers = inliers
        if best_inliers is None or best_count < min_inliers:
            break
        # least-squares refit on the consensus set, then a final inlier pass
        normal, offset = _fit_plane_least_squares(pts[best_inliers])
        refined = np.abs(pts @ normal - offset) <= inlier_threshold
        if int(refined.sum()) < min_inliers:
            refined = best_inliers
            normal, offset = _fit_plane_least_squares(pts[refined])
            refined = np.abs(pts @ normal - offset) <= inlier_threshold
            if int(refined.sum()) < min_inliers:
                break
        # the SVD normal sign is arbitrary; point it away from the cloud body
        outward = float(normal @ (pts[refined].mean(axis=0) - cloud.centroid()))
        if outward < 0:
            normal, offset = -normal, -offset
        planes.append(Plane(normal, offset, remaining[refined]))
        remaining = remaining[~refined]
    return planes


def best_fit_transform(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid alignment of paired points (Kabsch, reflection-guarded)."""
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    h = (src - src_c).T @ (dst - dst_c)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(matrix_to_quat(r), dst_c - r @ src_c)


def icp_point_to_point(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform | None = None,
    max_corr_dist: float = DEFAULT_MAX_CORR_DIST,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_rmse_tol: float = DEFAULT_REL_RMSE_TOL,
    dump_correspondences: str | None = None,
) -> IcpResult:
    """Point-to-point ICP from ``init``; updates that raise RMSE are rejected.

    Raises NoOverlapError when no source point has a target neighbor within
    ``max_corr_dist`` at the initial transform.
    """
    if max_corr_dist <= 0:
        raise ValueError("max_corr_dist must be positive")
    if init is None:
        init = RigidTransform.identity()
    tree = cKDTree(target.points)
    src = source.points
    current = init

    def correspondences(transform):
        moved = transform.apply_points(src)
        dist, idx = tree.query(moved, k=1, distance_upper_bound=max_corr_dist)
        valid = np.isfinite(dist)
        return moved, valid, idx, dist

    moved, valid, idx, dist = correspondences(current)
    if not valid.any():
        raise NoOverlapError(init)
    rmse = float(math.sqrt(np.mean(dist[valid] ** 2)))
    history = [rmse]

    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        update = best_fit_transform(moved[valid], target.points[idx[valid]])
        candidate = compose(update, current)
        moved_new, valid_new, idx_new, dist_new = correspondences(candidate)
        if not valid_new.any():
            break
        rmse_new = float(math.sqrt(np.mean(dist_new[valid_new] ** 2)))
        if rmse_new > rmse:
            break
        converged = rmse > 0 and abs(rmse - rmse_new) / rmse < rel_rmse_tol
        current = candidate
        moved, valid, idx, dist = moved_new, valid_new, idx_new, dist_new
        rmse = rmse_new
        history.append(rmse)
        if converged or rmse == 0.0:
            break

    fitness = float(valid.sum()) / len(source)
    if dump_correspondences is not None:
        pairs = np.vstack([moved[valid], target.points[idx[valid]]])
        _ply.write_ply(PointCloud(pairs), dump_correspondences)
    return IcpResult(current, fitness, rmse, max(iterations, 1), tuple(history))
