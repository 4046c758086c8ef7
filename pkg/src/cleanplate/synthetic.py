"""Synthetic RGB-D capture generator with exact ground truth.

Scenes are built from textured planes and boxes, ray-cast per frame together
with moving box occluders. Each frame yields the occluded RGB image, the
background-only ground truth, the exact occluder mask, a lidar point cloud in
the sensor frame (points tagged with object ids), and exact poses. Rendering
is deterministic for identical spec + seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .frames import CaptureSequence, FramePacket
from .geometry import (
    Intrinsics,
    PointCloud,
    Pose,
    quat_to_rotation,
    rotation_to_quat,
)

SKY_COLOR = np.array([166.0, 196.0, 222.0])
OCCLUDER_ID_BASE = 1000  # object ids >= this belong to occluders
_RAY_EPS = 1e-6


# ---------------------------------------------------------------------------
# Procedural textures. All map (u, v) in texture units to RGB floats 0..255.

def _tex_checker(u, v, variant):
    palettes = [
        ((90, 90, 95), (190, 185, 175)),
        ((70, 100, 70), (170, 200, 160)),
        ((120, 90, 70), (200, 170, 140)),
    ]
    a, b = palettes[variant % len(palettes)]
    cell = (np.floor(u) + np.floor(v)).astype(np.int64) % 2
    out = np.where(cell[..., None] == 0, np.array(a, dtype=float), np.array(b, dtype=float))
    return out


def _tex_stripes(u, v, variant):
    a = np.array([80.0 + 10 * (variant % 4), 85.0, 95.0])
    b = np.array([175.0, 170.0 - 8 * (variant % 4), 160.0])
    cell = np.floor(u).astype(np.int64) % 2
    return np.where(cell[..., None] == 0, a, b)


def _tex_plasma(u, v, variant):
    # Smooth low-frequency mix of sinusoids; variant shifts the phases.
    p = 0.7 * variant
    r = 128 + 45 * np.sin(2 * np.pi * (0.9 * u + p)) + 20 * np.sin(2 * np.pi * (0.35 * v - p))
    g = 128 + 40 * np.sin(2 * np.pi * (0.5 * (u + v) + 0.3 + p)) + 18 * np.sin(2 * np.pi * 0.27 * u)
    b = 128 + 42 * np.sin(2 * np.pi * (0.4 * v + 1.1 - p)) + 16 * np.sin(2 * np.pi * (0.22 * (u - v)))
    return np.stack([r, g, b], axis=-1)


def _tex_gradient(u, v, variant):
    r = 110 + 70 * np.sin(2 * np.pi * 0.05 * (u + 3 * variant))
    g = 120 + 60 * np.sin(2 * np.pi * 0.04 * v)
    b = 130 + 50 * np.sin(2 * np.pi * 0.03 * (u - v))
    return np.stack([r, g, b], axis=-1)


def _tex_flat(u, v, variant):
    shades = [(150, 60, 55), (60, 90, 150), (200, 170, 60), (90, 150, 90)]
    c = np.array(shades[variant % len(shades)], dtype=float)
    return np.broadcast_to(c, u.shape + (3,)).copy()


_TEXTURES = {
    "checker": _tex_checker,
    "stripes": _tex_stripes,
    "plasma": _tex_plasma,
    "gradient": _tex_gradient,
    "flat": _tex_flat,
}


def texture_color(texture: str, u: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    """Evaluate a texture id like "plasma:2" at world-units (u, v)."""
    name, _, var = texture.partition(":")
    if name not in _TEXTURES:
        raise DataError(f"unknown texture '{name}'")
    variant = int(var) if var else 0
    if scale <= 0:
        raise DataError("texture scale must be positive")
    return np.clip(_TEXTURES[name](u / scale, v / scale, variant), 0.0, 255.0)


# ---------------------------------------------------------------------------
# Primitives

@dataclass(frozen=True)
class PlaneSpec:
    """Finite textured rectangle: local z=0 plane spanning +-extent/2 in x, y."""

    pose: Pose  # world-from-local
    extent: tuple[float, float]
    texture: str = "checker"
    texture_scale: float = 1.0


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned box in its local frame, full side lengths in ``extent``."""

    pose: Pose  # world-from-local
    extent: tuple[float, float, float]
    texture: str = "flat"
    texture_scale: float = 1.0


@dataclass(frozen=True)
class OccluderTrack:
    """A box occluder with one pose per frame."""

    extent: tuple[float, float, float]
    track: tuple[Pose, ...]
    texture: str = "flat:0"
    texture_scale: float = 1.0


def _ray_plane(spec: PlaneSpec, origin: np.ndarray, dirs: np.ndarray):
    """Intersect rays with a finite plane; returns (t, u, v) with t=inf for misses."""
    inv = spec.pose.inverse()
    o = inv.transform(origin)
    d = dirs @ inv.R.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[2] / d[:, 2]
        x = o[0] + t * d[:, 0]
        y = o[1] + t * d[:, 1]
    w, h = spec.extent
    with np.errstate(invalid="ignore"):
        hit = (
            (np.abs(d[:, 2]) > 1e-12) & (t > _RAY_EPS)
            & (np.abs(x) <= w / 2) & (np.abs(y) <= h / 2)
        )
    t = np.where(hit, t, np.inf)
    return t, x, y


def _ray_box(spec: BoxSpec, origin: np.ndarray, dirs: np.ndarray):
    """Slab-method box intersection; returns (t, u, v) of the entry face."""
    inv = spec.pose.inverse()
    o = inv.transform(origin)
    d = dirs @ inv.R.T
    half = np.asarray(spec.extent) / 2.0
    tiny = np.abs(d) < 1e-12
    safe_d = np.where(tiny, 1.0, d)
    t1 = (-half - o) / safe_d
    t2 = (half - o) / safe_d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # Rays parallel to a slab hit it only if the origin lies inside that slab.
    inside = np.abs(o) <= half
    lo = np.where(tiny, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(tiny, np.where(inside, np.inf, -np.inf), hi)
    tnear = lo.max(axis=1)
    tfar = hi.min(axis=1)
    hit = (tnear <= tfar) & (tnear > _RAY_EPS) & np.isfinite(tnear)
    t = np.where(hit, tnear, np.inf)
    with np.errstate(invalid="ignore"):
        p = o + t[:, None] * d
        # Texture coords from the two axes orthogonal to the entry face.
        face = np.abs(lo - tnear[:, None]).argmin(axis=1)
    ax_u = (face + 1) % 3
    ax_v = (face + 2) % 3
    rows = np.arange(len(dirs))
    return t, p[rows, ax_u], p[rows, ax_v]


def camera_inside_box(spec: BoxSpec, center: np.ndarray) -> bool:
    local = spec.pose.inverse().transform(center)
    return bool(np.all(np.abs(local) <= np.asarray(spec.extent) / 2.0))


def cast_rays(primitives, origin: np.ndarray, dirs: np.ndarray):
    """Nearest-hit ray cast; returns (t, primitive index, tex u, tex v).

    Misses carry t=inf and index -1.
    """
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_idx = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    for i, prim in enumerate(primitives):
        if isinstance(prim, PlaneSpec):
            t, u, v = _ray_plane(prim, origin, dirs)
        else:
            t, u, v = _ray_box(prim, origin, dirs)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_idx[closer] = i
        best_u[closer] = u[closer]
        best_v[closer] = v[closer]
    return best_t, best_idx, best_u, best_v


# ---------------------------------------------------------------------------
# Scene and capture

@dataclass(frozen=True)
class LidarSpec:
    """Ring-scanner model: rings x samples directions over a forward sector."""

    rings: int = 40
    samples_per_ring: int = 400
    vertical_fov_deg: tuple[float, float] = (-28.0, 8.0)
    horizontal_fov_deg: float = 110.0
    range_noise_m: float = 0.01
    max_range_m: float = 120.0


@dataclass
class SceneSpec:
    """Everything needed to render one synthetic capture deterministically."""

    intrinsics: Intrinsics
    trajectory: list[Pose]  # world-from-camera, one per frame
    planes: list[PlaneSpec] = field(default_factory=list)
    boxes: list[BoxSpec] = field(default_factory=list)
    occluders: list[OccluderTrack] = field(default_factory=list)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    exposure_gain: list[float] | None = None  # per frame; default all 1.0
    exposure_bias: list[float] | None = None  # per frame; default all 0.0
    seed: int = 0

    def __post_init__(self):
        n = len(self.trajectory)
        if n == 0:
            raise DataError("trajectory must contain at least one pose")
        for occ in self.occluders:
            if len(occ.track) != n:
                raise DataError("occluder track length must equal frame count")
        if self.exposure_gain is None:
            self.exposure_gain = [1.0] * n
        if self.exposure_bias is None:
            self.exposure_bias = [0.0] * n
        if len(self.exposure_gain) != n or len(self.exposure_bias) != n:
            raise DataError("exposure arrays must have one entry per frame")

    @property
    def frame_count(self) -> int:
        return len(self.trajectory)


@dataclass
class SyntheticCapture:
    """render_sequence output: the capture plus every ground-truth raster."""

    sequence: CaptureSequence
    gt_images: list[np.ndarray]  # background-only RGB, same exposure as images
    gt_depth: list[np.ndarray]  # background camera-z depth, 0 where no surface
    gt_points: list[np.ndarray]  # (H, W, 3) background world hit points
    gain: np.ndarray
    bias: np.ndarray

    @property
    def masks(self) -> list[np.ndarray]:
        return [f.mask for f in self.sequence.frames]

    @property
    def images(self) -> list[np.ndarray]:
        return [f.image for f in self.sequence.frames]


def _pixel_rays(K: Intrinsics) -> np.ndarray:
    """Camera-frame directions with unit z, one per pixel, row-major."""
    u, v = np.meshgrid(np.arange(K.width, dtype=float), np.arange(K.height, dtype=float))
    d = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    return d.reshape(-1, 3)


def _lidar_dirs(spec: LidarSpec) -> np.ndarray:
    """Unit directions of one sweep in the sensor (camera) frame."""
    el = np.deg2rad(np.linspace(spec.vertical_fov_deg[0], spec.vertical_fov_deg[1], spec.rings))
    half = np.deg2rad(spec.horizontal_fov_deg) / 2.0
    az = np.linspace(-half, half, spec.samples_per_ring)
    el_g, az_g = np.meshgrid(el, az, indexing="ij")
    x = np.sin(az_g) * np.cos(el_g)
    y = -np.sin(el_g)  # +elevation looks up; camera y points down
    z = np.cos(az_g) * np.cos(el_g)
    return np.stack([x, y, z], axis=-1).reshape(-1, 3)


def _shade(primitives, ids, t, u, v, miss_color=SKY_COLOR):
    rgb = np.tile(miss_color, (len(t), 1))
    for i, prim in enumerate(primitives):
        sel = ids == i
        if not np.any(sel):
            continue
        rgb[sel] = texture_color(prim.texture, u[sel], v[sel], prim.texture_scale)
    return rgb


def _expose(rgb: np.ndarray, gain: float, bias: float) -> np.ndarray:
    return np.clip(rgb * gain + bias, 0.0, 255.0).astype(np.uint8)


def render_sequence(spec: SceneSpec) -> SyntheticCapture:
    """Ray-cast the full capture: images, ground truth, masks, clouds, poses."""
    K = spec.intrinsics
    statics = list(spec.planes) + list(spec.boxes)
    pix_dirs_cam = _pixel_rays(K)
    lidar_dirs_cam = _lidar_dirs(spec.lidar)

    frames: list[FramePacket] = []
    clouds: list[PointCloud] = []
    sensor_poses: list[Pose] = []
    object_ids: list[np.ndarray] = []
    gt_images: list[np.ndarray] = []
    gt_depths: list[np.ndarray] = []
    gt_points: list[np.ndarray] = []

    for fi, world_from_cam in enumerate(spec.trajectory):
        occluder_boxes = [
            BoxSpec(occ.track[fi], occ.extent, occ.texture, occ.texture_scale)
            for occ in spec.occluders
        ]
        prims = statics + occluder_boxes
        center = world_from_cam.t
        for b in occluder_boxes + [p for p in statics if isinstance(p, BoxSpec)]:
            if camera_inside_box(b, center):
                raise DataError(f"frame {fi}: camera center lies inside scene geometry")

        dirs_world = pix_dirs_cam @ world_from_cam.R.T
        # Full scene: image + mask. Statics first, so ids >= len(statics) are occluders.
        t_all, id_all, u_all, v_all = cast_rays(prims, center, dirs_world)
        mask = (id_all >= len(statics)).reshape(K.height, K.width)
        rgb_all = _shade(prims, id_all, t_all, u_all, v_all)

        # Background only: ground truth image, depth, and surface points.
        t_bg, id_bg, u_bg, v_bg = cast_rays(statics, center, dirs_world)
        rgb_bg = _shade(statics, id_bg, t_bg, u_bg, v_bg)
        depth_bg = np.where(np.isfinite(t_bg), t_bg, 0.0).reshape(K.height, K.width)
        pts_bg = center + np.where(np.isfinite(t_bg), t_bg, 0.0)[:, None] * dirs_world

        gain = float(spec.exposure_gain[fi])
        bias = float(spec.exposure_bias[fi])
        image = _expose(rgb_all, gain, bias).reshape(K.height, K.width, 3)
        gt_image = _expose(rgb_bg, gain, bias).reshape(K.height, K.width, 3)

        # Lidar sweep against the full scene; colors are surface albedo.
        rng = np.random.default_rng([spec.seed, fi])
        ld_world = lidar_dirs_cam @ world_from_cam.R.T
        t_l, id_l, u_l, v_l = cast_rays(prims, center, ld_world)
        hit = np.isfinite(t_l) & (t_l <= spec.lidar.max_range_m)
        ranges = t_l[hit] + rng.normal(0.0, spec.lidar.range_noise_m, size=int(hit.sum()))
        ranges = np.maximum(ranges, 1e-3)
        pts_sensor = lidar_dirs_cam[hit] * ranges[:, None]
        colors = _shade(prims, id_l[hit], t_l[hit], u_l[hit], v_l[hit])
        ids = id_l[hit].copy()
        ids[ids >= len(statics)] += OCCLUDER_ID_BASE - len(statics)

        frames.append(
            FramePacket(
                index=fi,
                image=image,
                pose=world_from_cam.inverse(),
                intrinsics=K,
                mask=mask,
            )
        )
        clouds.append(PointCloud(pts_sensor.astype(np.float32), colors.astype(np.uint8)))
        sensor_poses.append(world_from_cam)
        object_ids.append(ids)
        gt_images.append(gt_image)
        gt_depths.append(depth_bg)
        gt_points.append(pts_bg.reshape(K.height, K.width, 3))

    seq = CaptureSequence(frames, clouds, sensor_poses, object_ids)
    return SyntheticCapture(
        sequence=seq,
        gt_images=gt_images,
        gt_depth=gt_depths,
        gt_points=gt_points,
        gain=np.asarray(spec.exposure_gain, dtype=float),
        bias=np.asarray(spec.exposure_bias, dtype=float),
    )


# ---------------------------------------------------------------------------
# JSON (de)serialization of scene specs

def _pose_to_json(p: Pose) -> dict:
    world_from_local = p
    q = rotation_to_quat(world_from_local.R)
    return {"position": world_from_local.t.tolist(), "rotation_quat": q.tolist()}


def _pose_from_json(d: dict) -> Pose:
    R = quat_to_rotation(*d["rotation_quat"])
    return Pose(R, np.asarray(d["position"], dtype=float))


def scene_to_json(spec: SceneSpec) -> dict:
    return {
        "intrinsics": {
            "fx": spec.intrinsics.fx, "fy": spec.intrinsics.fy,
            "cx": spec.intrinsics.cx, "cy": spec.intrinsics.cy,
            "width": spec.intrinsics.width, "height": spec.intrinsics.height,
        },
        "trajectory": [_pose_to_json(p) for p in spec.trajectory],
        "planes": [
            {"pose": _pose_to_json(p.pose), "extent": list(p.extent),
             "texture": p.texture, "texture_scale": p.texture_scale}
            for p in spec.planes
        ],
        "boxes": [
            {"pose": _pose_to_json(b.pose), "extent": list(b.extent),
             "texture": b.texture, "texture_scale": b.texture_scale}
            for b in spec.boxes
        ],
        "occluders": [
            {"extent": list(o.extent), "track": [_pose_to_json(p) for p in o.track],
             "texture": o.texture, "texture_scale": o.texture_scale}
            for o in spec.occluders
        ],
        "lidar": {
            "rings": spec.lidar.rings,
            "samples_per_ring": spec.lidar.samples_per_ring,
            "vertical_fov_deg": list(spec.lidar.vertical_fov_deg),
            "horizontal_fov_deg": spec.lidar.horizontal_fov_deg,
            "range_noise_m": spec.lidar.range_noise_m,
            "max_range_m": spec.lidar.max_range_m,
        },
        "exposure_gain": list(spec.exposure_gain),
        "exposure_bias": list(spec.exposure_bias),
        "seed": spec.seed,
    }


def scene_from_json(doc: dict) -> SceneSpec:
    try:
        K = Intrinsics(**doc["intrinsics"])
        lidar = LidarSpec(
            rings=doc["lidar"]["rings"],
            samples_per_ring=doc["lidar"]["samples_per_ring"],
            vertical_fov_deg=tuple(doc["lidar"]["vertical_fov_deg"]),
            horizontal_fov_deg=doc["lidar"]["horizontal_fov_deg"],
            range_noise_m=doc["lidar"]["range_noise_m"],
            max_range_m=doc["lidar"]["max_range_m"],
        ) if "lidar" in doc else LidarSpec()
        return SceneSpec(
            intrinsics=K,
            trajectory=[_pose_from_json(p) for p in doc["trajectory"]],
            planes=[
                PlaneSpec(_pose_from_json(p["pose"]), tuple(p["extent"]),
                          p.get("texture", "checker"), p.get("texture_scale", 1.0))
                for p in doc.get("planes", [])
            ],
            boxes=[
                BoxSpec(_pose_from_json(b["pose"]), tuple(b["extent"]),
                        b.get("texture", "flat"), b.get("texture_scale", 1.0))
                for b in doc.get("boxes", [])
            ],
            occluders=[
                OccluderTrack(tuple(o["extent"]),
                              tuple(_pose_from_json(p) for p in o["track"]),
                              o.get("texture", "flat:0"), o.get("texture_scale", 1.0))
                for o in doc.get("occluders", [])
            ],
            lidar=lidar,
            exposure_gain=doc.get("exposure_gain"),
            exposure_bias=doc.get("exposure_bias"),
            seed=doc.get("seed", 0),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed scene spec: {exc}") from exc


def load_scene(path: str | Path) -> SceneSpec:
    with open(path) as fh:
        return scene_from_json(json.load(fh))


def save_scene(spec: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_json(spec), indent=2))
