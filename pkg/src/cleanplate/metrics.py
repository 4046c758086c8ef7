"""Masked-region image quality metrics: MAE, RMSE, PSNR, SSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # with sigma 1.5 this yields the standard 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate metrics over masked pixels only. PSNR is +inf when MSE is 0."""

    mae: float
    rmse: float
    psnr: float
    ssim: float

    def __post_init__(self):
        if self.mae > self.rmse + 1e-9:
            raise DataError("MAE cannot exceed RMSE")
        if not (-1.0 - 1e-9 <= self.ssim <= 1.0 + 1e-9):
            raise DataError("SSIM out of range")

    def as_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "psnr": None if np.isinf(self.psnr) else self.psnr,
            "ssim": self.ssim,
        }


def _as_frame_list(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray) and x.ndim in (2, 3):
        return [x]
    return list(x)


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM of two single-channel images under a Gaussian window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    blur = lambda x: ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=SSIM_TRUNCATE)
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def evaluate(results, ground_truth, masks) -> MetricsReport:
    """Score inpainted frames against rendered ground truth over masked pixels.

    Accepts single frames or aligned sequences. MAE/RMSE/PSNR pool every
    masked pixel and channel across the sequence; SSIM averages the per-pixel
    SSIM map (channel mean) over masked window centers.
    """
    results = _as_frame_list(results)
    ground_truth = _as_frame_list(ground_truth)
    masks = _as_frame_list(masks)
    if not (len(results) == len(ground_truth) == len(masks)):
        raise DataError("results, ground truth, and masks must be aligned")

    abs_sum = 0.0
    sq_sum = 0.0
    count = 0
    ssim_sum = 0.0
    ssim_count = 0
    for res, gt, mask in zip(results, ground_truth, masks):
        res = np.asarray(res)
        gt = np.asarray(gt)
        mask = np.asarray(mask, dtype=bool)
        if res.shape != gt.shape or mask.shape != res.shape[:2]:
            raise DataError("frame dimensions are misaligned")
        if not mask.any():
            continue
        diff = res[mask].astype(np.float64) - gt[mask].astype(np.float64)
        abs_sum += np.abs(diff).sum()
        sq_sum += (diff**2).sum()
        count += diff.size
        if res.ndim == 3:
            smap = np.mean(
                [ssim_map(res[..., c], gt[..., c]) for c in range(res.shape[2])], axis=0
            )
        else:
            smap = ssim_map(res, gt)
        ssim_sum += smap[mask].sum()
        ssim_count += int(mask.sum())
    if count == 0:
        raise DataError("empty mask: no pixels to evaluate")

    mae = abs_sum / count
    mse = sq_sum / count
    rmse = float(np.sqrt(mse))
    psnr = float(np.inf) if mse == 0 else float(10.0 * np.log10(DATA_RANGE**2 / mse))
    return MetricsReport(
        mae=float(mae), rmse=rmse, psnr=psnr, ssim=float(ssim_sum / ssim_count)
    )


def format_table(rows: dict[str, MetricsReport]) -> str:
    """Aligned plain-text table with columns MAE, RMSE, PSNR, SSIM."""
    headers = ["Method", "MAE", "RMSE", "PSNR", "SSIM"]
    lines = []
    body = []
    for name, rep in rows.items():
        psnr = "inf" if np.isinf(rep.psnr) else f"{rep.psnr:.3f}"
        body.append([name, f"{rep.mae:.3f}", f"{rep.rmse:.3f}", psnr, f"{rep.ssim:.3f}"])
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
              for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*headers))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append(fmt.format(*r))
    return "\n".join(lines)
