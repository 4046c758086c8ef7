"""Depth-guided candidate color sampling and label-space construction.

Every masked pixel is warped (unproject in the target, project in a source)
into other frames until one shows the background: the warped location must be
in bounds, outside the source mask, and depth-consistent with the source's
dense depth map. The scan runs forward to the end of the video, then backward
to the beginning, then over fused extra captures; because capture rigs move
forward, forward frames see the background closer, which is also the paper's
texture-detail preference. The chosen candidate seeds an n x n window of
source colors (the BP label space) plus, per label, the expected colors of
the pixel's four neighbors warped into the same source frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .frames import FramePacket
from .geometry import BEHIND_CAMERA_EPS, project_points, rasterize, unproject_pixels
from .imageops import sample_bilinear

# Side order used everywhere a per-neighbor axis appears: left, right, top, bottom.
SIDES = ((0, -1), (0, 1), (-1, 0), (1, 0))  # (drow, dcol)


@dataclass(frozen=True)
class SampleConfig:
    window_n: int = 3
    depth_tol_m: float = 0.05
    depth_tol_rel: float = 0.02

    def __post_init__(self):
        if self.window_n < 1 or self.window_n % 2 == 0:
            raise ConfigError("window_n must be a positive odd integer")
        if self.depth_tol_m <= 0 or self.depth_tol_rel < 0:
            raise ConfigError("depth tolerances must be positive")


@dataclass
class CandidateSample:
    """Per-pixel sampling outcome; invalid samples turn into blank pixels."""

    source_frame: int  # position in the search pool, -1 when invalid
    u: float
    v: float
    color: np.ndarray
    valid: bool
    source_depth: float


@dataclass
class FrameCandidates:
    """Vectorized candidates for every masked pixel of one target frame."""

    pixels: np.ndarray  # (M, 2) int, (row, col)
    source: np.ndarray  # (M,) int pool position, -1 = blank
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray  # warped point's camera depth in the source frame
    color: np.ndarray  # (M, 3) float, bilinear source sample

    @property
    def blank(self) -> np.ndarray:
        return self.source < 0


@dataclass
class LabelSpace:
    """BP label space of one frame: window colors + expected neighbor colors.

    Arrays are padded to n*n labels; ``n_labels`` gives the in-bounds count
    per pixel (labels are ordered row-major over window offsets). An expected
    color is only reliable (``expected_valid``) when its sample lands inside
    the source image and off the source's own mask; unreliable expectations
    carry no evidence about the neighbor's appearance.
    """

    pixels: np.ndarray  # (P, 2) int
    source: np.ndarray  # (P,) int pool position
    n_labels: np.ndarray  # (P,) int
    offsets: np.ndarray  # (P, L, 2) int, (dy, dx) per label
    colors: np.ndarray  # (P, L, 3) float
    expected: np.ndarray  # (P, 4, L, 3) float, sides ordered as SIDES
    expected_valid: np.ndarray  # (P, 4, L) bool
    blank_pixels: np.ndarray  # (B, 2) int


def _warp_into(
    target: FramePacket,
    rows: np.ndarray,
    cols: np.ndarray,
    depths: np.ndarray,
    source: FramePacket,
):
    """Warp target pixels with known depth into a source frame.

    Returns (u, v, z, ok); ok is False where the warp leaves the source
    frustum (behind camera or outside the image).
    """
    world = unproject_pixels(cols.astype(float), rows.astype(float), depths,
                             target.pose, target.intrinsics)
    u, v, z = project_points(world, source.pose, source.intrinsics)
    K = source.intrinsics
    ok = (z > BEHIND_CAMERA_EPS) & (u >= 0) & (u <= K.width - 1) & (v >= 0) & (v <= K.height - 1)
    return u, v, z, ok


def warp_pixel(
    target: FramePacket, u: float, v: float, depth: float, source: FramePacket
) -> tuple[float, float, float, bool]:
    """Single-pixel warp; returns (u_src, v_src, depth_src, ok)."""
    if depth <= 0:
        raise DataError("warp requires a positive depth")
    us, vs, zs, ok = _warp_into(
        target, np.array([v]), np.array([u]), np.array([depth]), source
    )
    return float(us[0]), float(vs[0]), float(zs[0]), bool(ok[0])


def sample_candidates(
    pool: list[FramePacket],
    target_pos: int,
    primary_count: int,
    config: SampleConfig = SampleConfig(),
) -> FrameCandidates:
    """Find the candidate source for every masked pixel of pool[target_pos].

    ``pool`` holds the primary video's frames first (``primary_count`` of
    them) followed by any fused extra frames. All frames need dense depth.
    """
    target = pool[target_pos]
    if target.dense_depth is None:
        raise DataError(f"frame {target.index}: dense depth missing")
    rows, cols = np.nonzero(target.mask)
    m = len(rows)
    source = np.full(m, -1, dtype=np.int64)
    out_u = np.zeros(m)
    out_v = np.zeros(m)
    out_z = np.zeros(m)
    out_c = np.zeros((m, 3))

    depths = target.dense_depth[rows, cols]
    pending = np.nonzero(depths > 0)[0]

    scan = list(range(target_pos + 1, primary_count))
    scan += list(range(target_pos - 1, -1, -1))
    scan += list(range(primary_count, len(pool)))

    for s_pos in scan:
        if len(pending) == 0:
            break
        src = pool[s_pos]
        if src.dense_depth is None:
            raise DataError(f"frame {src.index}: dense depth missing")
        u, v, z, ok = _warp_into(
            target, rows[pending], cols[pending], depths[pending], src
        )
        ui, vi = rasterize(u, v)
        uic = np.clip(ui, 0, src.intrinsics.width - 1)
        vic = np.clip(vi, 0, src.intrinsics.height - 1)
        ok &= ~src.mask[vic, uic]
        src_depth = src.dense_depth[vic, uic]
        tol = np.maximum(config.depth_tol_m, config.depth_tol_rel * z)
        ok &= (src_depth > 0) & (np.abs(z - src_depth) <= tol)

        hit = pending[ok]
        source[hit] = s_pos
        out_u[hit] = u[ok]
        out_v[hit] = v[ok]
        out_z[hit] = z[ok]
        out_c[hit] = sample_bilinear(src.image, u[ok], v[ok])
        pending = pending[~ok]

    return FrameCandidates(
        pixels=np.stack([rows, cols], axis=1),
        source=source,
        u=out_u,
        v=out_v,
        depth=out_z,
        color=out_c,
    )


def sample_candidate(
    pool: list[FramePacket],
    target_pos: int,
    primary_count: int,
    row: int,
    col: int,
    config: SampleConfig = SampleConfig(),
) -> CandidateSample:
    """Single-pixel form of sample_candidates."""
    target = pool[target_pos]
    if not target.mask[row, col]:
        raise DataError("pixel is not masked")
    single = np.zeros_like(target.mask)
    single[row, col] = True
    sub = FramePacket(
        index=target.index,
        image=target.image,
        pose=target.pose,
        intrinsics=target.intrinsics,
        mask=single,
        dense_depth=target.dense_depth,
    )
    tmp_pool = list(pool)
    tmp_pool[target_pos] = sub
    cand = sample_candidates(tmp_pool, target_pos, primary_count, config)
    valid = bool(cand.source[0] >= 0)
    return CandidateSample(
        source_frame=int(cand.source[0]),
        u=float(cand.u[0]),
        v=float(cand.v[0]),
        color=cand.color[0],
        valid=valid,
        source_depth=float(cand.depth[0]),
    )


def build_label_space(
    pool: list[FramePacket],
    target_pos: int,
    candidates: FrameCandidates,
    config: SampleConfig = SampleConfig(),
) -> LabelSpace:
    """Label windows and expected neighbor colors for all non-blank pixels.

    Window offsets are integer steps around the rounded candidate, clipped at
    the source image border; each neighbor is warped into the same source
    frame and read at the label's offset. Neighbors that cannot be warped
    (no depth, behind camera) fall back to the warped center shifted by one
    pixel in the neighbor's direction.
    """
    target = pool[target_pos]
    n = config.window_n
    k = n // 2
    lmax = n * n
    # Center-first label order: BP breaks belief ties toward the lowest label
    # index, so the zero offset (the geometrically expected correspondence)
    # must come first.
    window = np.array(
        sorted(
            ((dy, dx) for dy in range(-k, k + 1) for dx in range(-k, k + 1)),
            key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]),
        ),
        dtype=np.int64,
    )

    keep = ~candidates.blank
    pixels = candidates.pixels[keep]
    src_pos = candidates.source[keep]
    cu = candidates.u[keep]
    cv = candidates.v[keep]
    p_total = len(pixels)

    n_labels = np.zeros(p_total, dtype=np.int64)
    offsets = np.zeros((p_total, lmax, 2), dtype=np.int64)
    colors = np.zeros((p_total, lmax, 3))
    expected = np.zeros((p_total, 4, lmax, 3))
    expected_valid = np.zeros((p_total, 4, lmax), dtype=bool)

    h, w = target.mask.shape
    depth_t = target.dense_depth

    for s_pos in np.unique(src_pos):
        grp = np.nonzero(src_pos == s_pos)[0]
        src = pool[int(s_pos)]
        Ks = src.intrinsics
        c0, r0 = rasterize(cu[grp], cv[grp])

        # Window cells clipped at the source border, kept in row-major order.
        cand_r = r0[:, None] + window[None, :, 0]  # (G, L)
        cand_c = c0[:, None] + window[None, :, 1]
        valid = (cand_r >= 0) & (cand_r < Ks.height) & (cand_c >= 0) & (cand_c < Ks.width)
        order = np.argsort(~valid, axis=1, kind="stable")
        valid_sorted = np.take_along_axis(valid, order, axis=1)
        n_lab = valid.sum(axis=1)

        grp_offsets = window[order]  # (G, L, 2)
        rr = np.take_along_axis(cand_r, order, axis=1)
        cc = np.take_along_axis(cand_c, order, axis=1)
        rr = np.clip(rr, 0, Ks.height - 1)
        cc = np.clip(cc, 0, Ks.width - 1)
        grp_colors = src.image[rr, cc].astype(float)
        # Window cells on the source's own mask would offer the removed
        # object's colors as labels; substitute the (always unmasked) center.
        on_mask = src.mask[rr, cc]
        if on_mask.any():
            center = src.image[r0, c0].astype(float)
            grp_colors[on_mask] = np.broadcast_to(center[:, None, :], grp_colors.shape)[on_mask]
        grp_colors[~valid_sorted] = 0.0

        n_labels[grp] = n_lab
        offsets[grp] = grp_offsets
        colors[grp] = grp_colors

        # Expected neighbor colors: warp each 4-neighbor into the source and
        # read it at the label's window offset. Reads are integer-pixel at
        # the rounded warp, exactly like the window colors themselves, so a
        # neighbor pair with consistent labels matches its expectations
        # exactly (the neighbor's own candidate warp uses the same depth).
        prow = pixels[grp, 0]
        pcol = pixels[grp, 1]
        for side, (dr, dc) in enumerate(SIDES):
            nr = np.clip(prow + dr, 0, h - 1)
            nc = np.clip(pcol + dc, 0, w - 1)
            nd = depth_t[nr, nc]
            has_depth = (nd > 0) & (prow + dr >= 0) & (prow + dr < h) \
                & (pcol + dc >= 0) & (pcol + dc < w)
            un = cu[grp] + dc
            vn = cv[grp] + dr
            if has_depth.any():
                uw, vw, _, ok = _warp_into(
                    target, nr[has_depth].astype(float), nc[has_depth].astype(float),
                    nd[has_depth], src,
                )
                use = has_depth.copy()
                use[has_depth] &= ok
                un = un.copy()
                vn = vn.copy()
                un[use] = uw[ok]
                vn[use] = vw[ok]
            base_c, base_r = rasterize(un, vn)
            sam_r = base_r[:, None] + grp_offsets[:, :, 0]
            sam_c = base_c[:, None] + grp_offsets[:, :, 1]
            inb = (sam_r >= 0) & (sam_r < Ks.height) & (sam_c >= 0) & (sam_c < Ks.width)
            src_r = np.clip(sam_r, 0, Ks.height - 1)
            src_c = np.clip(sam_c, 0, Ks.width - 1)
            expected[grp, side] = src.image[src_r, src_c].astype(float)
            expected_valid[grp, side] = inb & ~src.mask[src_r, src_c]

    return LabelSpace(
        pixels=pixels,
        source=src_pos,
        n_labels=n_labels,
        offsets=offsets,
        colors=colors,
        expected=expected,
        expected_valid=expected_valid,
        blank_pixels=candidates.pixels[candidates.blank],
    )
