"""Per-frame and per-video container types shared by all pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import Intrinsics, PointCloud, Pose


@dataclass
class FramePacket:
    """One video frame plus everything the pipeline attaches to it.

    ``pose`` is camera-from-world (X_cam = R @ X_world + t); dataset files
    store world-from-sensor and are converted exactly once at load time.
    ``dense_depth`` and ``provenance`` start as None and are filled in by the
    pipeline.
    """

    index: int
    image: np.ndarray  # (H, W, 3) uint8 RGB
    pose: Pose
    intrinsics: Intrinsics
    mask: np.ndarray  # (H, W) bool
    dense_depth: np.ndarray | None = None
    provenance: np.ndarray | None = None

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.mask = np.asarray(self.mask)
        if self.image.ndim != 3 or self.image.shape[2] != 3 or self.image.dtype != np.uint8:
            raise DataError(f"frame {self.index}: image must be (H, W, 3) uint8")
        if self.mask.shape != self.image.shape[:2]:
            raise DataError(f"frame {self.index}: mask and image dimensions differ")
        if self.mask.dtype != bool:
            raise DataError(f"frame {self.index}: mask must be boolean")
        if self.image.shape[:2] != self.intrinsics.shape:
            raise DataError(f"frame {self.index}: image does not match intrinsics size")


@dataclass
class CaptureSequence:
    """Frames of one capture plus its raw sensor clouds and sensor poses.

    Clouds are in the sensor frame of their own packet. The sensor rig is
    co-located with the camera, so a cloud projects into its own image with
    the identity pose. ``sensor_poses`` are world-from-sensor.
    """

    frames: list[FramePacket]
    clouds: list[PointCloud]
    sensor_poses: list[Pose]
    object_ids: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.clouds) != len(self.frames) or len(self.sensor_poses) != len(self.frames):
            raise DataError("frames, clouds, and sensor poses must be index-aligned")
        indices = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError("frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)
