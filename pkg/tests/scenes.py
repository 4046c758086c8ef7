"""Synthetic scenes shared by the test suite.

World frame matches the first camera: x right, y down (ground at y=+1.5),
z forward. The camera drives forward along +z; occluders are boxes.
"""

import numpy as np

from cleanplate.geometry import Intrinsics, Pose
from cleanplate.synthetic import (
    BoxSpec,
    LidarSpec,
    OccluderTrack,
    PlaneSpec,
    SceneSpec,
)

# local z -> world -y: plane normal points up
GROUND_R = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
# local z -> world -z: plane faces the camera
WALL_R = np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])

CAMERA = Intrinsics(fx=300.0, fy=300.0, cx=160.0, cy=120.0, width=320, height=240)

TEST_LIDAR = LidarSpec(
    rings=80,
    samples_per_ring=800,
    vertical_fov_deg=(-32.0, 10.0),
    horizontal_fov_deg=100.0,
    range_noise_m=0.003,
)


def straight_trajectory(frames, step=0.15, x=0.0):
    return [Pose(np.eye(3), np.array([x, 0.0, step * i])) for i in range(frames)]


def room(ground_tex="plasma:1", ground_scale=4.0, wall_tex="gradient:2", wall_scale=2.0,
         wall_z=16.0):
    ground = PlaneSpec(Pose(GROUND_R, np.array([0.0, 1.5, 15.0])), (40.0, 60.0),
                       ground_tex, ground_scale)
    wall = PlaneSpec(Pose(WALL_R, np.array([0.0, -2.0, wall_z])), (40.0, 12.0),
                     wall_tex, wall_scale)
    return [ground, wall]


def roadside_boxes():
    """Static structures off the driving line; their side faces constrain
    lateral registration."""
    return [
        BoxSpec(Pose(np.eye(3), np.array([-3.2, 0.75, 9.0])), (1.5, 1.5, 2.5),
                "checker:2", 0.5),
        BoxSpec(Pose(np.eye(3), np.array([3.4, 0.65, 12.0])), (1.7, 1.7, 2.0),
                "stripes:1", 0.6),
    ]


def crossing_occluder(frames, step=0.15, x0=-1.5, x1=12.0, z=6.5, extent=(1.3, 1.3, 0.5)):
    """A box sweeping across the view that fully exits before the last frames,
    so every hidden background pixel is seen somewhere in the video."""
    track = tuple(
        Pose(np.eye(3), np.array([x0 + (x1 - x0) * i / (frames - 1), 0.8, z + step * i]))
        for i in range(frames)
    )
    return OccluderTrack(extent, track, "flat:0")


def drive_scene(seed, frames=20, ground_tex="plasma:1", ground_scale=4.0,
                wall_tex="gradient:2", occ_z=6.5, exposure=False):
    """Forward drive past a crossing occluder; full background visibility."""
    traj = straight_trajectory(frames)
    gain = bias = None
    if exposure:
        rng = np.random.default_rng([seed, 77])
        gain = rng.uniform(0.9, 1.1, frames).tolist()
        bias = rng.uniform(-8.0, 8.0, frames).tolist()
    return SceneSpec(
        intrinsics=CAMERA,
        trajectory=traj,
        planes=room(ground_tex=ground_tex, ground_scale=ground_scale, wall_tex=wall_tex),
        occluders=[crossing_occluder(frames, z=occ_z)],
        lidar=TEST_LIDAR,
        exposure_gain=gain,
        exposure_bias=bias,
        seed=seed,
    )


def lead_vehicle_scene(seed, frames=20):
    """A box that keeps pace ahead of the camera for the whole video: the
    background behind it is never visible within this capture."""
    step = 0.15
    traj = straight_trajectory(frames, step=step)
    track = tuple(
        Pose(np.eye(3), np.array([0.0, 0.7, 4.5 + step * i])) for i in range(frames)
    )
    occ = OccluderTrack((1.6, 1.4, 0.6), track, "flat:1")
    return SceneSpec(
        intrinsics=CAMERA,
        trajectory=traj,
        planes=room(),
        boxes=roadside_boxes(),
        occluders=[occ],
        lidar=TEST_LIDAR,
        seed=seed,
    )


def clean_pass_scene(seed, frames=20, lateral=-0.35):
    """The same scene captured without any occluder, on a parallel track."""
    traj = straight_trajectory(frames, step=0.15, x=lateral)
    return SceneSpec(
        intrinsics=CAMERA,
        trajectory=traj,
        planes=room(),
        boxes=roadside_boxes(),
        occluders=[],
        lidar=TEST_LIDAR,
        seed=seed,
    )


def reexpress_world(capture, offset: Pose):
    """Re-express a capture's sensor poses in a world rotated/shifted by
    ``offset`` (new world-from-old world). Images and sensor-frame clouds are
    untouched; only poses change, as for a capture registered on another day.
    """
    inv = offset.inverse()
    capture.sequence.sensor_poses = [inv.compose(p) for p in capture.sequence.sensor_poses]
    for frame, pose in zip(capture.sequence.frames, capture.sequence.sensor_poses):
        frame.pose = pose.inverse()
    return capture


def small_boxes_scene(seed, frames=12):
    """Drive past static textured boxes with a slow crossing occluder; a
    busier variant for end-to-end coverage."""
    traj = straight_trajectory(frames, step=0.18)
    box1 = BoxSpec(Pose(np.eye(3), np.array([-2.5, 0.9, 10.0])), (1.2, 1.2, 1.2),
                   "checker:2", 0.6)
    box2 = BoxSpec(Pose(np.eye(3), np.array([2.8, 0.8, 13.0])), (1.4, 1.4, 1.4),
                   "stripes:1", 0.7)
    occ = crossing_occluder(frames, step=0.18, x0=-1.0, x1=10.0, z=6.0,
                            extent=(1.1, 1.1, 0.5))
    return SceneSpec(
        intrinsics=CAMERA,
        trajectory=traj,
        planes=room(),
        boxes=[box1, box2],
        occluders=[occ],
        lidar=TEST_LIDAR,
        seed=seed,
    )
