"""cleanplate: depth-guided removal of masked objects from RGB-D video.

Frames of a capture are correlated through a shared background point-cloud
map; occluded pixels are filled by warping colors in from frames that see the
background, regularized with belief propagation, blended with a guided
Poisson solve, and smoothed temporally. A second capture of the same scene
can be fused in to fill regions occluded for the whole video.
"""

from .bp import (
    Labeling,
    MrfProblem,
    build_problem,
    data_cost,
    discontinuity_cost,
    energy_of,
    solve_map_bp,
    solve_map_exhaustive,
)
from .config import PipelineConfig, config_from_dict, load_config
from .errors import (
    CleanplateError,
    ConfigError,
    DataError,
    InstanceTooLargeError,
    InsufficientSeedsError,
    NumericalError,
    RegistrationFailedError,
    UnconstrainedRegistrationError,
)
from .frames import CaptureSequence, FramePacket
from .geometry import (
    Intrinsics,
    PointCloud,
    Pose,
    densify_depth,
    project_point,
    project_points,
    render_depth,
    unproject_pixel,
    unproject_pixels,
)
from .harmonize import GuidanceField, PoissonSolution, build_guidance_field, solve_poisson
from .mapping import (
    RegistrationResult,
    fuse_maps,
    register_cloud,
    remove_dynamic_points,
    stitch_map,
    voxel_downsample,
)
from .metrics import MetricsReport, evaluate, format_table
from .pipeline import PipelineResult, run_pipeline
from .refine import RefinementConfig, RefinementResult, photometric_error, refine_rotation
from .sampling import (
    CandidateSample,
    FrameCandidates,
    LabelSpace,
    SampleConfig,
    build_label_space,
    sample_candidate,
    sample_candidates,
    warp_pixel,
)
from .smoothing import FlowField, SmoothingConfig, compute_flow, temporal_smooth
from .synthetic import (
    BoxSpec,
    LidarSpec,
    OccluderTrack,
    PlaneSpec,
    SceneSpec,
    SyntheticCapture,
    load_scene,
    render_sequence,
    save_scene,
)

__version__ = "0.1.0"
