"""Background-map assembly: dynamic-point removal, stitching, registration, fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, RegistrationFailedError, UnconstrainedRegistrationError
from .frames import CaptureSequence, FramePacket
from .geometry import BEHIND_CAMERA_EPS, PointCloud, Pose, project_points, rasterize

logger = logging.getLogger(__name__)

DEFAULT_VOXEL_M = 0.05


@dataclass
class RegistrationResult:
    """Source-to-target rigid alignment with its quality figures."""

    transform: Pose
    rms_residual: float
    inlier_fraction: float

    def __post_init__(self):
        if self.rms_residual < 0 or not (0.0 <= self.inlier_fraction <= 1.0):
            raise DataError("invalid registration quality figures")


def masked_projection_index(cloud: PointCloud, frame: FramePacket) -> np.ndarray:
    """True for points whose projection into the frame lands on a masked pixel.

    The cloud is in the frame's own sensor frame (identity projection pose);
    points behind the camera or outside the image are False.
    """
    K = frame.intrinsics
    u, v, z = project_points(cloud.points, Pose.identity(), K)
    ui, vi = rasterize(u, v)
    visible = (z > BEHIND_CAMERA_EPS) & (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
    hit = np.zeros(len(cloud), dtype=bool)
    hit[visible] = frame.mask[vi[visible], ui[visible]]
    return hit


def remove_dynamic_points(cloud: PointCloud, frame: FramePacket) -> PointCloud:
    """Drop points projecting onto the frame's inpaint mask; keep all others."""
    return cloud.take(~masked_projection_index(cloud, frame))


def voxel_downsample(cloud: PointCloud, voxel_m: float = DEFAULT_VOXEL_M) -> PointCloud:
    """One representative point per voxel cell, the one nearest the cell centroid."""
    if voxel_m <= 0:
        raise DataError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud
    cells = np.floor(cloud.points / voxel_m).astype(np.int64)
    _, inverse = np.unique(cells, axis=0, return_inverse=True)
    n_cells = inverse.max() + 1
    sums = np.zeros((n_cells, 3))
    counts = np.zeros(n_cells)
    np.add.at(sums, inverse, cloud.points)
    np.add.at(counts, inverse, 1.0)
    centroids = sums / counts[:, None]
    dist = np.linalg.norm(cloud.points - centroids[inverse], axis=1)
    # Nearest-to-centroid representative; ties resolve to the earliest point.
    order = np.lexsort((np.arange(len(cloud)), dist, inverse))
    firsts = order[np.searchsorted(inverse[order], np.arange(n_cells))]
    return cloud.take(firsts)


def stitch_map(seq: CaptureSequence, voxel_m: float = DEFAULT_VOXEL_M) -> PointCloud:
    """World-frame background map: filter dynamic points per frame, transform,
    concatenate, and voxel-downsample."""
    parts_pts: list[np.ndarray] = []
    parts_col: list[np.ndarray] = []
    has_colors = all(c.colors is not None for c in seq.clouds if len(c) > 0)
    for frame, cloud, pose in zip(seq.frames, seq.clouds, seq.sensor_poses):
        if pose is None:
            raise DataError(f"frame {frame.index} has no sensor pose")
        kept = remove_dynamic_points(cloud, frame)
        if len(kept) == 0:
            continue
        parts_pts.append(pose.transform(kept.points))
        if has_colors:
            parts_col.append(kept.colors)
    if not parts_pts:
        raise DataError("stitching produced an empty map")
    merged = PointCloud(
        np.concatenate(parts_pts),
        np.concatenate(parts_col) if has_colors else None,
    )
    return voxel_downsample(merged, voxel_m)


def estimate_normals(points: np.ndarray, k: int = 20) -> np.ndarray:
    """Per-point unit normals from PCA over the k nearest neighbors."""
    n = len(points)
    k = min(k, n)
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    nbrs = points[idx]  # (N, k, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]  # smallest-eigenvalue direction


def _so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3)
    axis = w / theta
    K = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def _plane_residual(
    src: np.ndarray, tree: cKDTree, tgt: np.ndarray, normals: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Trimmed point-to-plane residual of src against the target surface.

    Returns (rms, inlier index into src, corresponding target index, inlier fraction).
    Inliers are correspondences within 3x the median distance.
    """
    dist, idx = tree.query(src)
    inlier = dist <= 3.0 * np.median(dist)
    r = np.einsum("ij,ij->i", src[inlier] - tgt[idx[inlier]], normals[idx[inlier]])
    rms = float(np.sqrt(np.mean(r**2))) if len(r) else 0.0
    return rms, np.nonzero(inlier)[0], idx[inlier], float(inlier.mean())


def register_cloud(
    source: PointCloud,
    target: PointCloud,
    init: Pose | None = None,
    max_iterations: int = 50,
    update_tol: float = 1e-6,
    normal_k: int = 20,
) -> RegistrationResult:
    """Point-to-plane ICP aligning source onto target.

    The init must be within the convergence basin (roughly <= 2 m translation
    and <= 10 deg rotation for well-structured clouds). The returned transform
    is the iterate with the lowest trimmed residual, so it never scores worse
    than the init.
    """
    if len(source) < 100 or len(target) < 100:
        raise DataError("registration needs at least 100 points per cloud")
    if init is None:
        init = Pose.identity()
    tgt = target.points
    normals = estimate_normals(tgt, k=normal_k)
    ncov = (normals.T @ normals) / len(normals)
    eig = np.linalg.eigvalsh(ncov)
    if eig[0] < 1e-6 * eig[-1]:
        raise UnconstrainedRegistrationError(
            "target normals span fewer than 3 directions; registration is unconstrained"
        )
    tree = cKDTree(tgt)

    current = init
    best = None
    for _ in range(max_iterations):
        src = current.transform(source.points)
        rms, src_in, tgt_in, frac = _plane_residual(src, tree, tgt, normals)
        if best is None or rms < best.rms_residual:
            best = RegistrationResult(current, rms, frac)
        p = src[src_in]
        n = normals[tgt_in]
        r = np.einsum("ij,ij->i", p - tgt[tgt_in], n)
        J = np.concatenate([np.cross(p, n), n], axis=1)  # d r / d (omega, tau)
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        dR = _so3_exp(delta[:3])
        step = Pose(_orthonormalize(dR), delta[3:])
        current = Pose(
            _orthonormalize(step.R @ current.R), step.R @ current.t + step.t
        )
        if np.linalg.norm(delta) < update_tol:
            break
    src = current.transform(source.points)
    rms, _, _, frac = _plane_residual(src, tree, tgt, normals)
    if best is None or rms < best.rms_residual:
        best = RegistrationResult(current, rms, frac)
    return best


def fuse_maps(
    base: PointCloud,
    extra: CaptureSequence,
    voxel_m: float = DEFAULT_VOXEL_M,
    init: Pose | None = None,
    max_rms_m: float = 0.10,
) -> tuple[PointCloud, list[Pose], RegistrationResult]:
    """Register an extra capture into an existing map and merge the clouds.

    Returns the merged map, the extra capture's corrected world-from-sensor
    poses (so its frames can serve as color sources in the base world frame),
    and the registration result. Raises RegistrationFailedError when the
    alignment residual exceeds ``max_rms_m``.
    """
    extra_map = stitch_map(extra, voxel_m)
    reg = register_cloud(extra_map, base, init=init)
    if reg.rms_residual > max_rms_m:
        raise RegistrationFailedError(
            f"registration residual {reg.rms_residual:.3f} m exceeds {max_rms_m} m; "
            "fusion aborted"
        )
    corrected = [reg.transform.compose(p) for p in extra.sensor_poses]
    merged_pts = np.concatenate([base.points, reg.transform.transform(extra_map.points)])
    merged_col = None
    if base.colors is not None and extra_map.colors is not None:
        merged_col = np.concatenate([base.colors, extra_map.colors])
    merged = voxel_downsample(PointCloud(merged_pts, merged_col), voxel_m)
    logger.info(
        "fused %d extra points into map (rms %.4f m, inliers %.0f%%)",
        len(extra_map), reg.rms_residual, 100 * reg.inlier_fraction,
    )
    return merged, corrected, reg
