"""Shared raster helpers: bilinear sampling, mask rings, provenance rendering."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

BLANK = -1  # provenance sentinel: masked pixel with no candidate in any frame
OUTSIDE = -2  # provenance sentinel: pixel outside the inpainting mask


def sample_bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup at subpixel (u, v); coordinates are clamped to the image.

    Works for (H, W) and (H, W, C) arrays; returns float samples with shape
    matching u plus the channel axis, if any.
    """
    h, w = img.shape[:2]
    u = np.clip(np.asarray(u, dtype=float), 0.0, w - 1.0)
    v = np.clip(np.asarray(v, dtype=float), 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    if img.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    a = img[v0, u0].astype(float)
    b = img[v0, u1].astype(float)
    c = img[v1, u0].astype(float)
    d = img[v1, u1].astype(float)
    return (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv


def mask_ring(mask: np.ndarray, width: int) -> np.ndarray:
    """Known-pixel band around the mask: dilation by `width` px minus the mask."""
    if width < 1:
        raise ValueError("ring width must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    structure = np.ones((2 * width + 1, 2 * width + 1), dtype=bool)
    dilated = ndimage.binary_dilation(mask, structure=structure)
    return dilated & ~mask


# 20 visually distinct 8-bit colors for provenance dumps.
_PALETTE = np.array(
    [
        (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
        (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
        (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
        (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
        (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
    ],
    dtype=np.uint8,
)


def provenance_to_rgb(provenance: np.ndarray) -> np.ndarray:
    """Color-code a provenance map: frame index -> palette, blank -> magenta,
    outside the mask -> black."""
    prov = np.asarray(provenance)
    out = np.zeros(prov.shape + (3,), dtype=np.uint8)
    known = prov >= 0
    out[known] = _PALETTE[prov[known] % len(_PALETTE)]
    out[prov == BLANK] = (255, 0, 255)
    return out
