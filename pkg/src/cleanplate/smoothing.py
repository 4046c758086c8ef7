"""Flicker removal: trace inpainted pixels through optical flow and average.

The built-in flow is coarse-to-fine block matching (dependency-free and
adequate for the small inter-frame motion of consecutive video); precomputed
flow can be supplied instead as Middlebury .flo files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .imageops import sample_bilinear

FLOW_LEVELS = 3
FLOW_BLOCK = 8
FLOW_SEARCH = 4
_TEXTURE_VAR_MIN = 1.0  # blocks flatter than this carry no usable signal
_INVALID_FLOW = 1e9  # .flo files mark unknown flow with huge magnitudes


@dataclass
class FlowField:
    """Dense displacement from one frame to another, plus per-pixel validity."""

    u: np.ndarray  # column displacement
    v: np.ndarray  # row displacement
    valid: np.ndarray  # bool

    def __post_init__(self):
        if not (self.u.shape == self.v.shape == self.valid.shape):
            raise DataError("flow component shapes differ")
        if not np.isfinite(self.u[self.valid]).all() or not np.isfinite(self.v[self.valid]).all():
            raise DataError("flow must be finite where valid")


@dataclass(frozen=True)
class SmoothingConfig:
    radius: int = 2  # frames averaged on each side
    min_samples: int = 2  # below this, the original color is kept

    def __post_init__(self):
        if self.radius < 1:
            raise ConfigError("temporal radius must be >= 1")
        if not (1 <= self.min_samples <= 2 * self.radius + 1):
            raise ConfigError("min_samples must be within 1..2*radius+1")


def flow_from_arrays(u: np.ndarray, v: np.ndarray) -> FlowField:
    """Wrap externally computed flow; huge or non-finite entries are invalid."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    valid = np.isfinite(u) & np.isfinite(v) & (np.abs(u) < _INVALID_FLOW) & (np.abs(v) < _INVALID_FLOW)
    return FlowField(np.where(valid, u, 0.0), np.where(valid, v, 0.0), valid)


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=2) if img.ndim == 3 else img


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    return img[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _pad_to_blocks(img: np.ndarray, block: int) -> np.ndarray:
    h, w = img.shape
    ph = (-h) % block
    pw = (-w) % block
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw)), mode="edge")
    return img


def _block_match(a: np.ndarray, b_warped: np.ndarray, block: int, search: int):
    """Integer residual flow per block minimizing SSD, plus the best SSD map."""
    h, w = a.shape
    ap = _pad_to_blocks(a, block)
    bp = _pad_to_blocks(b_warped, block)
    hp, wp = ap.shape
    by, bx = hp // block, wp // block

    best_ssd = np.full((by, bx), np.inf)
    best_du = np.zeros((by, bx))
    best_dv = np.zeros((by, bx))
    pad = search
    b_big = np.pad(bp, pad, mode="constant", constant_values=np.nan)
    for dv in range(-search, search + 1):
        for du in range(-search, search + 1):
            shifted = b_big[pad + dv : pad + dv + hp, pad + du : pad + du + wp]
            diff = (ap - shifted) ** 2
            diff = np.nan_to_num(diff, nan=np.inf)
            ssd = diff.reshape(by, block, bx, block).sum(axis=(1, 3))
            better = ssd < best_ssd
            best_ssd[better] = ssd[better]
            best_du[better] = du
            best_dv[better] = dv
    return best_du, best_dv, best_ssd


def _expand_blocks(grid: np.ndarray, block: int, h: int, w: int) -> np.ndarray:
    full = np.repeat(np.repeat(grid, block, axis=0), block, axis=1)
    return full[:h, :w]


def compute_flow(
    image_a: np.ndarray,
    image_b: np.ndarray,
    levels: int = FLOW_LEVELS,
    block: int = FLOW_BLOCK,
    search: int = FLOW_SEARCH,
) -> FlowField:
    """Block-matching flow a -> b over an image pyramid.

    Each level warps b by the upsampled estimate and block-matches the
    residual within +-search. Validity requires block texture (variance above
    a floor) and a matching error below a texture-scaled threshold.
    """
    a = _to_gray(image_a)
    b = _to_gray(image_b)
    if a.shape != b.shape:
        raise DataError("flow inputs must share dimensions")

    pyr_a = [a]
    pyr_b = [b]
    for _ in range(levels - 1):
        if min(pyr_a[-1].shape) < 2 * block:
            break
        pyr_a.append(_downsample2(pyr_a[-1]))
        pyr_b.append(_downsample2(pyr_b[-1]))

    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    best_ssd = None
    for level in range(len(pyr_a) - 1, -1, -1):
        al = pyr_a[level]
        bl = pyr_b[level]
        h, w = al.shape
        if u.shape != al.shape:
            u = _resize_bilinear(u, h, w) * 2.0
            v = _resize_bilinear(v, h, w) * 2.0
        gx, gy = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
        sx = gx + u
        sy = gy + v
        inbound = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        warped = sample_bilinear(bl, sx, sy)
        warped[~inbound] = np.nan
        du, dv, ssd = _block_match(al, warped, block, search)
        u = u + _expand_blocks(du, block, h, w)
        v = v + _expand_blocks(dv, block, h, w)
        best_ssd = ssd

    h, w = a.shape
    ap = _pad_to_blocks(a, block)
    by, bx = ap.shape[0] // block, ap.shape[1] // block
    block_mean = ap.reshape(by, block, bx, block).mean(axis=(1, 3))
    block_var = (ap.reshape(by, block, bx, block) ** 2).mean(axis=(1, 3)) - block_mean**2
    msd = best_ssd / (block * block)
    valid_blocks = (block_var > _TEXTURE_VAR_MIN) & (msd <= np.maximum(25.0, block_var))
    valid = _expand_blocks(valid_blocks, block, h, w).astype(bool)
    return FlowField(u=u, v=v, valid=valid)


def _resize_bilinear(img: np.ndarray, h: int, w: int) -> np.ndarray:
    sh, sw = img.shape
    if (sh, sw) == (h, w):
        return img.copy()
    ys = np.linspace(0, sh - 1, h)
    xs = np.linspace(0, sw - 1, w)
    gx, gy = np.meshgrid(xs, ys)
    return sample_bilinear(img, gx, gy)


def _trace_step(flow: FlowField, x: np.ndarray, y: np.ndarray, alive: np.ndarray):
    """Advance positions one frame along a flow field; kills invalid traces."""
    h, w = flow.u.shape
    inb = alive & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xi = np.clip(np.round(x).astype(np.int64), 0, w - 1)
    yi = np.clip(np.round(y).astype(np.int64), 0, h - 1)
    inb &= flow.valid[yi, xi]
    du = sample_bilinear(flow.u, x, y)
    dv = sample_bilinear(flow.v, x, y)
    nx = np.where(inb, x + du, x)
    ny = np.where(inb, y + dv, y)
    return nx, ny, inb


def temporal_smooth(
    frames: list[np.ndarray],
    masks: list[np.ndarray],
    flows_fwd: list[FlowField],
    flows_bwd: list[FlowField],
    config: SmoothingConfig = SmoothingConfig(),
) -> list[np.ndarray]:
    """Average each masked pixel with its flow-traced colors in neighbor frames.

    ``flows_fwd[i]`` maps frame i to i+1 and ``flows_bwd[i]`` maps frame i+1
    to i. The pixel's own color always counts as one sample; if fewer than
    ``min_samples`` samples survive tracing, the original color is kept.
    Pixels outside the mask are untouched.
    """
    n = len(frames)
    if len(masks) != n or len(flows_fwd) != max(n - 1, 0) or len(flows_bwd) != max(n - 1, 0):
        raise DataError("frames, masks, and flows are misaligned")
    out = [f.copy() for f in frames]
    for t in range(n):
        mask = masks[t]
        if not mask.any():
            continue
        rows, cols = np.nonzero(mask)
        own = frames[t][rows, cols].astype(np.float64)
        total = own.copy()
        count = np.ones(len(rows))

        for direction in (+1, -1):
            x = cols.astype(np.float64)
            y = rows.astype(np.float64)
            alive = np.ones(len(rows), dtype=bool)
            for step in range(1, config.radius + 1):
                s = t + direction * step
                if s < 0 or s >= n:
                    break
                flow = flows_fwd[s - 1] if direction > 0 else flows_bwd[s]
                x, y, alive = _trace_step(flow, x, y, alive)
                if not alive.any():
                    break
                colors = sample_bilinear(frames[s], x, y)
                total[alive] += colors[alive]
                count[alive] += 1.0

        smoothed = total / count[:, None]
        keep = count >= config.min_samples
        vals = np.where(keep[:, None], smoothed, own)
        out[t][rows, cols] = np.clip(np.round(vals), 0, 255).astype(frames[t].dtype)
    return out
