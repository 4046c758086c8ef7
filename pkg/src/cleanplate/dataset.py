"""On-disk dataset model.

Layout of one video dataset::

    root/
      images/%06d.png        8-bit RGB frames
      masks/%06d.png         binary inpaint masks (0 or 255)
      clouds/%06d.ply        sensor-frame point clouds (float32 xyz + rgb)
      poses.txt              one line per frame: index tx ty tz qx qy qz qw
                             (world-from-sensor, Hamilton quaternions)
      intrinsics.json        fx fy cx cy width height
      manifest.json          dataset metadata, incl. the 16-bit depth PNG scale
      ground_truth/%06d.png  optional background-only frames (synthetic data)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .frames import CaptureSequence, FramePacket
from .geometry import Intrinsics, PointCloud, Pose, quat_to_rotation, rotation_to_quat
from .synthetic import SyntheticCapture

DEPTH_PNG_MM_PER_UNIT = 1.0  # 16-bit depth PNGs store millimeters


# ---------------------------------------------------------------------------
# PNG helpers

def read_image(path: str | Path) -> np.ndarray:
    arr = np.array(Image.open(path).convert("RGB"))
    return arr


def write_image(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def read_mask(path: str | Path) -> np.ndarray:
    raw = np.array(Image.open(path).convert("L"))
    values = np.unique(raw)
    if not np.isin(values, (0, 255)).all():
        raise DataError(f"{path}: mask is not binary (values {values.tolist()})")
    return raw > 0


def write_mask(mask: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)


def write_depth_png(depth_m: np.ndarray, path: str | Path) -> None:
    """16-bit grayscale depth in millimeters; invalid (<= 0) stores 0."""
    mm = np.where(depth_m > 0, depth_m * 1000.0 / DEPTH_PNG_MM_PER_UNIT, 0.0)
    Image.fromarray(np.clip(np.round(mm), 0, 65535).astype(np.uint16)).save(path)


def read_depth_png(path: str | Path) -> np.ndarray:
    mm = np.array(Image.open(path)).astype(np.float64)
    return mm * DEPTH_PNG_MM_PER_UNIT / 1000.0


# ---------------------------------------------------------------------------
# PLY point clouds (float32 xyz, optional uint8 rgb; ascii or binary LE)

def write_ply(cloud: PointCloud, path: str | Path, binary: bool = True) -> None:
    pts = cloud.points.astype(np.float32)
    has_color = cloud.colors is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {len(pts)}")
    header += ["property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            if has_color:
                rec = np.empty(
                    len(pts),
                    dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                           ("r", "u1"), ("g", "u1"), ("b", "u1")],
                )
                rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
                rec["r"], rec["g"], rec["b"] = (cloud.colors[:, i] for i in range(3))
            else:
                rec = np.empty(len(pts), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4")])
                rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
            fh.write(rec.tobytes())
        else:
            lines = []
            for i in range(len(pts)):
                line = f"{pts[i, 0]:.9g} {pts[i, 1]:.9g} {pts[i, 2]:.9g}"
                if has_color:
                    c = cloud.colors[i]
                    line += f" {c[0]} {c[1]} {c[2]}"
                lines.append(line)
            fh.write(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def read_ply(path: str | Path) -> PointCloud:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise DataError(f"{path}: not a PLY file")
        fmt = None
        count = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: truncated PLY header")
            tokens = line.decode("ascii", "replace").strip().split()
            if not tokens:
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                in_vertex = tokens[1] == "vertex"
                if in_vertex:
                    count = int(tokens[2])
            elif tokens[0] == "property" and in_vertex:
                props.append((tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise DataError(f"{path}: unsupported PLY format '{fmt}'")
        if count is None:
            raise DataError(f"{path}: PLY has no vertex element")
        names = [p[1] for p in props]
        for needed in ("x", "y", "z"):
            if needed not in names:
                raise DataError(f"{path}: PLY misses '{needed}' property")
        has_color = all(c in names for c in ("red", "green", "blue"))

        np_types = {"float": "<f4", "float32": "<f4", "double": "<f8",
                    "uchar": "u1", "uint8": "u1"}
        try:
            dtype = np.dtype([(name, np_types[t]) for t, name in props])
        except KeyError as exc:
            raise DataError(f"{path}: unsupported PLY property type {exc}") from exc

        if fmt == "binary_little_endian":
            raw = fh.read(dtype.itemsize * count)
            if len(raw) != dtype.itemsize * count:
                raise DataError(f"{path}: truncated PLY payload")
            rec = np.frombuffer(raw, dtype=dtype, count=count)
        else:
            text = fh.read().decode("ascii")
            flat = np.array(text.split(), dtype=np.float64)
            if flat.size != count * len(props):
                raise DataError(f"{path}: ASCII PLY payload size mismatch")
            table = flat.reshape(count, len(props))
            rec = np.zeros(count, dtype=dtype)
            for i, (_, name) in enumerate(props):
                rec[name] = table[:, i]
        pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float32)
        colors = None
        if has_color:
            colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.uint8)
        return PointCloud(pts, colors)


# ---------------------------------------------------------------------------
# Poses (TUM-style) and intrinsics

def write_poses(poses: list[Pose], path: str | Path, indices=None) -> None:
    """World-from-sensor poses, one `index tx ty tz qx qy qz qw` line each."""
    if indices is None:
        indices = range(len(poses))
    lines = []
    for idx, pose in zip(indices, poses):
        q = rotation_to_quat(pose.R)
        vals = " ".join(f"{x:.17g}" for x in (*pose.t, *q))
        lines.append(f"{idx} {vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses(path: str | Path) -> dict[int, Pose]:
    poses: dict[int, Pose] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise DataError(f"{path}:{ln}: expected 8 fields, got {len(parts)}")
        idx = int(parts[0])
        tx, ty, tz, qx, qy, qz, qw = map(float, parts[1:])
        poses[idx] = Pose(quat_to_rotation(qx, qy, qz, qw), np.array([tx, ty, tz]))
    return poses


def write_intrinsics(K: Intrinsics, path: str | Path) -> None:
    Path(path).write_text(json.dumps({
        "fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy,
        "width": K.width, "height": K.height,
    }, indent=2))


def read_intrinsics(path: str | Path) -> Intrinsics:
    try:
        return Intrinsics(**json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"{path}: malformed intrinsics: {exc}") from exc


# ---------------------------------------------------------------------------
# Middlebury .flo optical flow files

FLO_MAGIC = 202021.25


def write_flo(flow_u: np.ndarray, flow_v: np.ndarray, path: str | Path) -> None:
    h, w = flow_u.shape
    inter = np.empty((h, w, 2), dtype="<f4")
    inter[..., 0] = flow_u
    inter[..., 1] = flow_v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(inter.tobytes())


def read_flo(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic, w, h = struct.unpack("<fii", fh.read(12))
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise DataError(f"{path}: bad .flo magic {magic}")
        raw = fh.read(4 * 2 * w * h)
        if len(raw) != 4 * 2 * w * h:
            raise DataError(f"{path}: truncated .flo payload")
        inter = np.frombuffer(raw, dtype="<f4").reshape(h, w, 2)
    return inter[..., 0].astype(np.float64), inter[..., 1].astype(np.float64)


# ---------------------------------------------------------------------------
# Whole datasets

def write_dataset(capture: SyntheticCapture, root: str | Path, binary_ply: bool = True) -> Path:
    """Persist a synthetic capture in the standard dataset layout."""
    root = Path(root)
    for sub in ("images", "masks", "clouds", "ground_truth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    seq = capture.sequence
    for frame, cloud, gt in zip(seq.frames, seq.clouds, capture.gt_images):
        stem = f"{frame.index:06d}.png"
        write_image(frame.image, root / "images" / stem)
        write_mask(frame.mask, root / "masks" / stem)
        write_ply(cloud, root / "clouds" / f"{frame.index:06d}.ply", binary=binary_ply)
        write_image(gt, root / "ground_truth" / stem)
    write_poses(seq.sensor_poses, root / "poses.txt", [f.index for f in seq.frames])
    write_intrinsics(seq.frames[0].intrinsics, root / "intrinsics.json")
    (root / "manifest.json").write_text(json.dumps({
        "frames": len(seq),
        "depth_png_mm_per_unit": DEPTH_PNG_MM_PER_UNIT,
        "has_ground_truth": True,
    }, indent=2))
    return root


def load_dataset(root: str | Path) -> CaptureSequence:
    """Load and validate a dataset directory into an index-aligned sequence."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory does not exist")
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise DataError(f"{root}: missing images/ directory")
    indices = sorted(int(p.stem) for p in image_dir.glob("*.png"))
    if not indices:
        raise DataError(f"{root}: no frames found")
    K = read_intrinsics(root / "intrinsics.json")
    poses = read_poses(root / "poses.txt")

    frames: list[FramePacket] = []
    clouds: list[PointCloud] = []
    sensor_poses: list[Pose] = []
    for idx in indices:
        stem = f"{idx:06d}"
        mask_path = root / "masks" / f"{stem}.png"
        cloud_path = root / "clouds" / f"{stem}.ply"
        if not mask_path.exists():
            raise DataError(f"frame {idx}: missing mask {mask_path}")
        if not cloud_path.exists():
            raise DataError(f"frame {idx}: missing cloud {cloud_path}")
        if idx not in poses:
            raise DataError(f"frame {idx}: missing pose in poses.txt")
        image = read_image(image_dir / f"{stem}.png")
        try:
            mask = read_mask(mask_path)
        except DataError as exc:
            raise DataError(f"frame {idx}: {exc}") from exc
        if mask.shape != image.shape[:2]:
            raise DataError(f"frame {idx}: mask and image dimensions differ")
        world_from_sensor = poses[idx]
        frames.append(FramePacket(
            index=idx,
            image=image,
            pose=world_from_sensor.inverse(),
            intrinsics=K,
            mask=mask,
        ))
        clouds.append(read_ply(cloud_path))
        sensor_poses.append(world_from_sensor)
    return CaptureSequence(frames, clouds, sensor_poses)


def load_ground_truth(root: str | Path, indices: list[int]) -> list[np.ndarray] | None:
    """Ground-truth frames when the dataset ships them, else None."""
    gt_dir = Path(root) / "ground_truth"
    if not gt_dir.is_dir():
        return None
    out = []
    for idx in indices:
        p = gt_dir / f"{idx:06d}.png"
        if not p.exists():
            raise DataError(f"frame {idx}: missing ground truth {p}")
        out.append(read_image(p))
    return out
