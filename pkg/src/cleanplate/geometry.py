"""Pinhole camera model, rigid poses, projection, z-buffer rendering, densification.

Conventions used throughout the library:
  - image arrays are indexed [row, col] = [v, u]; integer pixel coordinates
    sit at sample centers,
  - Pose maps world coordinates into camera coordinates, X_cam = R @ X + t,
  - depth means camera-frame z in meters; depth <= 0 marks an invalid pixel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import QhullError

from .errors import DataError, InsufficientSeedsError

# Points closer to the image plane than this are treated as behind the camera.
BEHIND_CAMERA_EPS = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DataError("principal point must lie inside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping world to camera coordinates: X_cam = R @ X + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if np.abs(R.T @ R - np.eye(3)).max() >= 1e-9:
            raise DataError("rotation is not orthonormal")
        if np.linalg.det(R) <= 0:
            raise DataError("rotation must be proper (det = +1)")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self @ other)(X) = self(other(X))."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to an (N, 3) array (or a single (3,) point)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.t

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m


def rotation_from_euler_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation Rz @ Ry @ Rx from per-axis angles in radians."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def quat_to_rotation(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    """Hamilton-convention unit quaternion to rotation matrix."""
    q = np.array([qx, qy, qz, qw], dtype=float)
    n = np.linalg.norm(q)
    if n == 0:
        raise DataError("zero quaternion")
    x, y, z, w = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to Hamilton quaternion (qx, qy, qz, qw), qw >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            w = (R[2, 1] - R[1, 2]) / s
            x = 0.25 * s
            y = (R[0, 1] + R[1, 0]) / s
            z = (R[0, 2] + R[2, 0]) / s
        elif i == 1:
            s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            w = (R[0, 2] - R[2, 0]) / s
            x = (R[0, 1] + R[1, 0]) / s
            y = 0.25 * s
            z = (R[1, 2] + R[2, 1]) / s
        else:
            s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            w = (R[1, 0] - R[0, 1]) / s
            x = (R[0, 2] + R[2, 0]) / s
            y = (R[1, 2] + R[2, 1]) / s
            z = 0.25 * s
    q = np.array([x, y, z, w])
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass
class PointCloud:
    """World- or sensor-frame 3D points with optional 8-bit colors."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise DataError("point cloud contains non-finite coordinates")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise DataError("colors and points must have the same length")

    def __len__(self) -> int:
        return len(self.points)

    def take(self, index: np.ndarray) -> "PointCloud":
        colors = self.colors[index] if self.colors is not None else None
        return PointCloud(self.points[index], colors)

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.transform(self.points), self.colors)


def project_points(
    points: np.ndarray, pose: Pose, K: Intrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (N, 3) world points; returns (u, v, z) with z <= eps marking behind-camera.

    u, v are subpixel image coordinates; entries with z <= BEHIND_CAMERA_EPS
    must be ignored by the caller (u, v are not meaningful there).
    """
    cam = pose.transform(np.atleast_2d(points))
    z = cam[:, 2]
    safe = np.where(z > BEHIND_CAMERA_EPS, z, 1.0)
    u = K.fx * cam[:, 0] / safe + K.cx
    v = K.fy * cam[:, 1] / safe + K.cy
    return u, v, z


def project_point(
    point: np.ndarray, pose: Pose, K: Intrinsics
) -> tuple[float, float, float] | None:
    """Single-point projection; None signals a behind-camera point."""
    u, v, z = project_points(np.asarray(point, dtype=float).reshape(1, 3), pose, K)
    if z[0] <= BEHIND_CAMERA_EPS:
        return None
    return float(u[0]), float(v[0]), float(z[0])


def unproject_pixels(
    u: np.ndarray, v: np.ndarray, depth: np.ndarray, pose: Pose, K: Intrinsics
) -> np.ndarray:
    """Lift pixels with camera depth back to (N, 3) world points."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise DataError("unprojection requires positive depth")
    x = (u - K.cx) / K.fx * depth
    y = (v - K.cy) / K.fy * depth
    cam = np.stack([x, y, depth], axis=-1)
    return (cam - pose.t) @ pose.R


def unproject_pixel(u: float, v: float, depth: float, pose: Pose, K: Intrinsics) -> np.ndarray:
    return unproject_pixels(
        np.array([u]), np.array([v]), np.array([depth]), pose, K
    )[0]


def rasterize(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-integer pixel of subpixel coordinates; ties round half-up."""
    return np.floor(u + 0.5).astype(np.int64), np.floor(v + 0.5).astype(np.int64)


def render_depth(cloud: PointCloud, pose: Pose, K: Intrinsics) -> np.ndarray:
    """Z-buffer the cloud into a sparse depth map (0 = no point hit the pixel)."""
    if len(cloud) == 0:
        raise DataError("cannot render an empty point cloud")
    u, v, z = project_points(cloud.points, pose, K)
    ui, vi = rasterize(u, v)
    ok = (z > BEHIND_CAMERA_EPS) & (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
    depth = np.full((K.height, K.width), np.inf)
    np.minimum.at(depth, (vi[ok], ui[ok]), z[ok])
    depth[~np.isfinite(depth)] = 0.0
    return depth


def _median_filter_valid(depth: np.ndarray, size: int = 5) -> np.ndarray:
    """Median over the size x size window using only in-bounds valid samples.

    Support is unchanged: invalid pixels stay invalid.
    """
    h, w = depth.shape
    k = size // 2
    padded = np.full((h + 2 * k, w + 2 * k), np.nan)
    padded[k : k + h, k : k + w] = np.where(depth > 0, depth, np.nan)
    stack = np.empty((size * size, h, w))
    idx = 0
    for dy in range(size):
        for dx in range(size):
            stack[idx] = padded[dy : dy + h, dx : dx + w]
            idx += 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows
        med = np.nanmedian(stack, axis=0)
    out = np.where(depth > 0, med, 0.0)
    return np.nan_to_num(out, nan=0.0)


def densify_depth(sparse: np.ndarray, median_size: int = 5) -> np.ndarray:
    """Fill a sparse depth map by piecewise-linear interpolation over its seeds.

    Interpolation is barycentric over a Delaunay triangulation of the valid
    seed pixels and covers exactly their convex hull; a median filter (valid
    samples only) then removes isolated outliers. Pixels outside the hull
    remain invalid.
    """
    sparse = np.asarray(sparse, dtype=float)
    vr, vc = np.nonzero(sparse > 0)
    if len(vr) < 3:
        raise InsufficientSeedsError(f"need >= 3 seed pixels, got {len(vr)}")
    pts = np.stack([vc, vr], axis=1).astype(float)  # (u, v) order
    try:
        interp = LinearNDInterpolator(pts, sparse[vr, vc])
    except QhullError as exc:
        raise InsufficientSeedsError("seed pixels are collinear") from exc
    h, w = sparse.shape
    gu, gv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dense = interp(gu, gv)
    dense = np.nan_to_num(dense, nan=0.0)
    dense[dense < 0] = 0.0
    return _median_filter_valid(dense, median_size)


