"""Per-frame camera rotation refinement by discrete pitch/yaw search.

Residual misalignment between the map and the image is compensated by
minimizing the photometric error of colored map points projected into a ring
of known pixels around the inpaint mask. Translation is held fixed: for
mostly-distant points rotation dominates the projection location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .frames import FramePacket
from .geometry import BEHIND_CAMERA_EPS, PointCloud, rasterize
from .imageops import mask_ring, sample_bilinear

_CELL_CHUNK = 64  # grid cells evaluated per vectorized batch
_MAX_POINTS = 3000  # ring-local points used by the grid search (strided beyond)


@dataclass(frozen=True)
class RefinementConfig:
    pitch_range_deg: float = 1.0
    yaw_range_deg: float = 1.0
    step_deg: float = 0.05
    ring_px: int = 20

    def __post_init__(self):
        if self.step_deg <= 0:
            raise ConfigError("refinement step must be positive")
        if self.pitch_range_deg < self.step_deg or self.yaw_range_deg < self.step_deg:
            raise ConfigError("refinement ranges must be at least one step")
        if self.ring_px < 1:
            raise ConfigError("ring width must be >= 1 px")


@dataclass
class RefinementResult:
    rotation: np.ndarray  # refined camera-from-world rotation
    error: float  # E at the optimum (normalized per contributing point)
    initial_error: float  # E at the unperturbed rotation
    pitch_deg: float
    yaw_deg: float
    improved: bool  # False when every grid cell had no contributing points

    def __post_init__(self):
        if self.error > self.initial_error:
            raise DataError("refined error exceeds initial error")


def _pitch_yaw_rotation(pitch_rad: np.ndarray, yaw_rad: np.ndarray) -> np.ndarray:
    """Camera-frame perturbations Rx(pitch) @ Ry(yaw), stacked (G, 3, 3)."""
    cp, sp = np.cos(pitch_rad), np.sin(pitch_rad)
    cy, sy = np.cos(yaw_rad), np.sin(yaw_rad)
    G = len(pitch_rad)
    R = np.zeros((G, 3, 3))
    # Rx(p) @ Ry(y), rows: x' = (cy, 0, sy); y' = (sp sy, cp, -sp cy); z' = (-cp sy, sp, cp cy)
    R[:, 0, 0] = cy
    R[:, 0, 2] = sy
    R[:, 1, 0] = sp * sy
    R[:, 1, 1] = cp
    R[:, 1, 2] = -sp * cy
    R[:, 2, 0] = -cp * sy
    R[:, 2, 1] = sp
    R[:, 2, 2] = cp * cy
    return R


def _grid_errors(
    frame: FramePacket,
    cam_points: np.ndarray,
    colors: np.ndarray,
    deltas: np.ndarray,
    t: np.ndarray,
    ring: np.ndarray,
) -> np.ndarray:
    """Normalized photometric error for a stack of rotation perturbations.

    cam_points are R_init @ X_world (translation not yet applied); colors are
    the map point colors aligned with them.
    """
    K = frame.intrinsics
    image = frame.image
    errors = np.full(len(deltas), np.inf)
    for start in range(0, len(deltas), _CELL_CHUNK):
        dR = deltas[start : start + _CELL_CHUNK]
        cam = np.einsum("gij,nj->gni", dR, cam_points) + t  # (g, N, 3)
        z = cam[:, :, 2]
        ok = z > BEHIND_CAMERA_EPS
        zs = np.where(ok, z, 1.0)
        u = K.fx * cam[:, :, 0] / zs + K.cx
        v = K.fy * cam[:, :, 1] / zs + K.cy
        ui, vi = rasterize(u, v)
        ok &= (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
        uic = np.clip(ui, 0, K.width - 1)
        vic = np.clip(vi, 0, K.height - 1)
        ok &= ring[vic, uic]
        sampled = sample_bilinear(image, u, v)  # (g, N, 3)
        sq = ((colors - sampled) ** 2).sum(axis=2)
        counts = ok.sum(axis=1)
        sums = np.where(ok, sq, 0.0).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
        errors[start : start + len(dR)] = e
    return errors


def photometric_error(
    frame: FramePacket, colored_map: PointCloud, R: np.ndarray, ring: np.ndarray
) -> float:
    """Mean squared RGB distance of map points projected into the ring.

    Points landing outside the ring are ignored; returns inf when no point
    contributes.
    """
    if colored_map.colors is None:
        raise DataError("photometric error requires a colored map")
    if not np.asarray(ring, dtype=bool).any():
        raise DataError("ring is empty")
    cam_points = colored_map.points @ np.asarray(R, dtype=float).T
    e = _grid_errors(
        frame,
        cam_points,
        colored_map.colors.astype(float),
        np.eye(3)[None],
        frame.pose.t,
        np.asarray(ring, dtype=bool),
    )
    return float(e[0])


def refine_rotation(
    frame: FramePacket,
    colored_map: PointCloud,
    config: RefinementConfig = RefinementConfig(),
) -> RefinementResult:
    """Exhaustive pitch x yaw grid search around the frame's current rotation.

    Ties resolve toward the smaller offset magnitude, then smaller pitch, then
    smaller yaw, which makes the result independent of evaluation order.
    """
    if colored_map.colors is None:
        raise DataError("refinement requires a colored map")
    ring = mask_ring(frame.mask, config.ring_px)
    if not ring.any():
        raise DataError("mask ring is empty; nothing to refine against")

    step = np.deg2rad(config.step_deg)
    n_pitch = int(round(config.pitch_range_deg / config.step_deg))
    n_yaw = int(round(config.yaw_range_deg / config.step_deg))
    pitches = step * np.arange(-n_pitch, n_pitch + 1)
    yaws = step * np.arange(-n_yaw, n_yaw + 1)
    pg, yg = np.meshgrid(pitches, yaws, indexing="ij")
    pg = pg.ravel()
    yg = yg.ravel()
    deltas = _pitch_yaw_rotation(pg, yg)

    R_init = frame.pose.R
    t = frame.pose.t
    K = frame.intrinsics
    cam_points = colored_map.points @ R_init.T

    # Speed: restrict to points that can possibly reach the ring under the
    # searched rotations. Projection shift is bounded by ~f*tan(angle) times a
    # field-of-view factor; triple it for slack.
    diag = np.deg2rad(np.hypot(config.pitch_range_deg, config.yaw_range_deg))
    margin = int(np.ceil(3.0 * max(K.fx, K.fy) * np.tan(diag))) + 4
    cam0 = cam_points + t
    z0 = cam0[:, 2]
    vis = z0 > BEHIND_CAMERA_EPS
    zs = np.where(vis, z0, 1.0)
    u0 = K.fx * cam0[:, 0] / zs + K.cx
    v0 = K.fy * cam0[:, 1] / zs + K.cy
    rr, cc = np.nonzero(ring)
    keep = (
        vis
        & (u0 >= cc.min() - margin) & (u0 <= cc.max() + margin)
        & (v0 >= rr.min() - margin) & (v0 <= rr.max() + margin)
    )
    cam_points = cam_points[keep]
    colors = colored_map.colors[keep].astype(float)
    if len(cam_points) > _MAX_POINTS:
        stride = int(np.ceil(len(cam_points) / _MAX_POINTS))
        cam_points = cam_points[::stride]
        colors = colors[::stride]

    if len(cam_points) == 0:
        errors = np.full(len(deltas), np.inf)
    else:
        errors = _grid_errors(frame, cam_points, colors, deltas, t, ring)

    center = np.flatnonzero((pg == 0) & (yg == 0))[0]
    initial_error = float(errors[center])
    if not np.isfinite(errors).any():
        return RefinementResult(
            rotation=R_init, error=initial_error, initial_error=initial_error,
            pitch_deg=0.0, yaw_deg=0.0, improved=False,
        )
    mag2 = pg**2 + yg**2
    best = np.lexsort((yg, pg, mag2, errors))[0]
    refined = _pitch_yaw_rotation(pg[best : best + 1], yg[best : best + 1])[0] @ R_init
    return RefinementResult(
        rotation=refined,
        error=float(errors[best]),
        initial_error=initial_error,
        pitch_deg=float(np.rad2deg(pg[best])),
        yaw_deg=float(np.rad2deg(yg[best])),
        improved=True,
    )
