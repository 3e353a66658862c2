"""Spinning-radar odometry on SE(2).

Library layout:

- geometry: pose algebra and 2x2 eigendecomposition
- polar_filter: k-strongest filtering of polar sweeps
- surface: oriented surface points, motion compensation, radius queries
- registration: point-to-line / point-to-point Gauss-Newton alignment
- pipeline: the incremental keyframed odometry loop
- simulate: synthetic radar worlds with ground truth
- io: scan archives, trajectory files, Oxford-style recordings
- evaluate: benchmark metrics and the resolution sweep
- plots: report figures
- cli: the `radar-odom` command-line front end
"""

from .errors import MalformedFile, MissingMetadata, PathTooShort
from .evaluate import (
    OdomErrorReport,
    SweepRow,
    kitti_odometry_error,
    relative_pose_error,
    resolution_sweep,
)
from .geometry import (
    IDENTITY,
    EigenMin,
    Pose2,
    compose,
    eigen_min,
    inverse,
    normalize_angle,
    transform_point,
    transform_points,
)
from .io import (
    ScanArchive,
    TrajectoryEstimate,
    read_oxford_polar,
    read_scan_archive,
    read_trajectory,
    write_scan_archive,
    write_trajectory,
)
from .pipeline import (
    FrameDiagnostics,
    Keyframe,
    OdometryParams,
    RadarOdometry,
    run_odometry,
    select_keyframe,
    update_velocity,
)
from .polar_filter import (
    Detections,
    FilterParams,
    PolarScan,
    RadarPointCloud,
    filter_scan,
    k_strongest,
    polar_to_cartesian,
    uniform_azimuths,
)
from .registration import (
    Correspondences,
    Metric,
    RegistrationError,
    RegistrationParams,
    RegistrationResult,
    SingularNormalEquations,
    TooFewCorrespondences,
    associate,
    cost,
    register,
    solve_step,
)
from .simulate import (
    SimConfig,
    World2D,
    constant_twist_trajectory,
    corridor_world,
    load_world,
    render_scan,
    render_sequence,
    sparse_world,
)
from .surface import (
    OrientedSurfacePoint,
    SurfaceParams,
    SurfacePointSet,
    build_surface_points,
    motion_compensate,
    radius_query,
    transform_set,
)

__version__ = "0.1.0"
