"""Seamless blending of sampled colors via a guided Poisson solve.

Desired gradients come from the BP composite; pairs of pixels drawn from
different source frames (or touching a blank pixel) get zero gradient, which
erases exposure seams, and blank regions (zero guidance throughout) reduce to
smooth membrane interpolation. Boundary colors are fixed to the surrounding
image, so the solve bends the filled region onto the target frame's exposure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DataError
from .frames import FramePacket

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER_FACTOR = 10
RESIDUAL_MAXNORM_TARGET = 1e-5  # keeps the Laplacian residual comfortably under 1e-4


@dataclass
class GuidanceField:
    """Desired per-channel forward differences over the image grid.

    ``gx[y, x]`` is the target difference f(y, x+1) - f(y, x); ``gy[y, x]``
    is f(y+1, x) - f(y, x). Only entries on edges incident to the mask enter
    the solve.
    """

    gx: np.ndarray  # (H, W, 3)
    gy: np.ndarray  # (H, W, 3)
    provenance: np.ndarray  # (H, W) int

    def __post_init__(self):
        if not (np.isfinite(self.gx).all() and np.isfinite(self.gy).all()):
            raise DataError("guidance field must be finite")


@dataclass
class PoissonSolution:
    """Solved colors (floats, pre-clamp) with solver diagnostics."""

    values: np.ndarray  # (H, W, 3) float; outside the mask equals the frame
    residual_norm: float  # max-norm of A x - b over channels
    iterations: int  # max CG iterations over channels

    def compose(self) -> np.ndarray:
        return np.clip(np.round(self.values), 0, 255).astype(np.uint8)


def build_guidance_field(
    bp_colors: np.ndarray, provenance: np.ndarray, mask: np.ndarray
) -> GuidanceField:
    """Forward differences of the BP composite, zeroed across provenance seams.

    A pair contributes its difference only when both pixels are masked,
    non-blank, and share the same source frame; every other pair (seams,
    blanks, mask boundary) gets exactly zero.
    """
    bp_colors = np.asarray(bp_colors, dtype=np.float64)
    provenance = np.asarray(provenance)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    gx = np.zeros((h, w, 3))
    gy = np.zeros((h, w, 3))

    same_x = (
        mask[:, :-1] & mask[:, 1:]
        & (provenance[:, :-1] >= 0) & (provenance[:, 1:] >= 0)
        & (provenance[:, :-1] == provenance[:, 1:])
    )
    diff_x = bp_colors[:, 1:] - bp_colors[:, :-1]
    gx[:, :-1][same_x] = diff_x[same_x]

    same_y = (
        mask[:-1] & mask[1:]
        & (provenance[:-1] >= 0) & (provenance[1:] >= 0)
        & (provenance[:-1] == provenance[1:])
    )
    diff_y = bp_colors[1:] - bp_colors[:-1]
    gy[:-1][same_y] = diff_y[same_y]
    return GuidanceField(gx=gx, gy=gy, provenance=provenance.copy())


def _cg(A, b, rtol, maxnorm, maxiter):
    """Plain conjugate gradient; stops once both residual criteria hold."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    bnorm = float(np.sqrt(b @ b)) or 1.0
    iterations = 0
    while iterations < maxiter:
        if np.sqrt(rs) < rtol * bnorm and np.abs(r).max(initial=0.0) <= maxnorm:
            break
        Ap = A @ p
        denom = float(p @ Ap)
        if denom <= 0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        iterations += 1
    return x, iterations


def solve_poisson(
    field: GuidanceField,
    frame: FramePacket,
    tol: float = DEFAULT_TOL,
    max_iter_factor: int = DEFAULT_MAX_ITER_FACTOR,
) -> PoissonSolution:
    """Solve the discrete guided-Poisson system over the frame's mask.

    Dirichlet boundary values come from the surrounding image; where the mask
    touches the image border the missing neighbor is treated as reflected
    (the edge drops out of the system) and a warning is logged. Channels are
    solved independently by conjugate gradient.
    """
    mask = frame.mask
    h, w = mask.shape
    n = int(mask.sum())
    if n == 0:
        raise DataError("mask is empty; nothing to solve")
    rows, cols = np.nonzero(mask)  # row-major unknown ordering
    ids = np.full((h, w), -1, dtype=np.int64)
    ids[rows, cols] = np.arange(n)

    if (rows.min() == 0 or cols.min() == 0 or rows.max() == h - 1 or cols.max() == w - 1):
        logger.warning("mask touches the image border; using reflected boundary there")

    image = frame.image.astype(np.float64)
    deg = np.zeros(n)
    off_i: list[np.ndarray] = []
    off_j: list[np.ndarray] = []
    b = np.zeros((n, 3))

    for dr, dc, grad, sign in (
        (0, 1, field.gx, -1.0),   # right neighbor, edge gradient at p
        (0, -1, field.gx, +1.0),  # left neighbor, edge gradient stored at p-x
        (1, 0, field.gy, -1.0),   # down
        (-1, 0, field.gy, +1.0),  # up
    ):
        nr = rows + dr
        nc = cols + dc
        inside = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
        deg += inside.astype(float)
        nrc = np.clip(nr, 0, h - 1)
        ncc = np.clip(nc, 0, w - 1)
        nb_id = ids[nrc, ncc]
        in_mask = inside & (nb_id >= 0)
        off_i.append(np.nonzero(in_mask)[0])
        off_j.append(nb_id[in_mask])
        known = inside & (nb_id < 0)
        b[known] += image[nrc[known], ncc[known]]
        # Guidance contribution of the existing edge: stored at the lesser
        # coordinate, so "left"/"up" edges read the gradient at the neighbor.
        gr = rows if sign < 0 else nrc
        gc = cols if sign < 0 else ncc
        b[inside] += sign * grad[gr[inside], gc[inside]]

    ii = np.concatenate([np.arange(n)] + off_i)
    jj = np.concatenate([np.arange(n)] + off_j)
    vv = np.concatenate([deg] + [-np.ones(len(o)) for o in off_i])
    A = sparse.csr_matrix((vv, (ii, jj)), shape=(n, n))

    maxiter = max(1, max_iter_factor * n)
    values = image.copy()
    worst_resid = 0.0
    worst_iter = 0
    for c in range(3):
        x, iters = _cg(A, b[:, c], tol, RESIDUAL_MAXNORM_TARGET, maxiter)
        resid = float(np.abs(A @ x - b[:, c]).max(initial=0.0))
        worst_resid = max(worst_resid, resid)
        worst_iter = max(worst_iter, iters)
        values[rows, cols, c] = x
    return PoissonSolution(values=values, residual_norm=worst_resid, iterations=worst_iter)
