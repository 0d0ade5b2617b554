"""Linear velocity bootstrapping for event cameras from line-generated
space-time manifolds: geometry, minimal solver, robust clustering, velocity
averaging, synthetic generator, and experiment harness."""

from .averaging import (
    PartialObservation,
    StackedSystem,
    VelocityEstimate,
    average_velocity,
    average_velocity_oracle,
    build_stacked_system,
)
from .egg import (
    CircularArc,
    ConstantAccel,
    ConstantTwist,
    ImuModel,
    MotionModel,
    NoiseSpec,
    SplineMotion,
    Wireframe,
    corrupt,
    corrupt_gyro,
    generate_scene,
    pose_at,
    simulate_events,
    simulate_imu,
    single_line_instance,
)
from .events_io import (
    BearingEvent,
    Event,
    EventSet,
    ImuSample,
    TimeWindow,
    TrajectorySample,
    downsample,
    read_events,
    read_imu,
    read_trajectory,
    unrotate_events,
    window_events,
    write_events,
    write_imu,
    write_trajectory,
)
from .geometry import (
    CameraModel,
    EventailModel,
    LineFrame,
    PluckerLine,
    Twist,
    TwoPointLine,
    angular_line_error,
    backproject,
    camera_center_at,
    dual_model,
    incidence_residual_minimal,
    incidence_residual_nonminimal,
    line_frame,
    model_from_scene,
    plucker_from_two_points,
    project,
    reciprocal_product,
    rotation_at,
    scale_line,
)
from .harness import (
    DirectionErrorReport,
    SweepTable,
    direction_error,
    fit_event_window,
    partial_direction_error,
    run_high_dynamics,
    run_motion_violation,
    run_noise_sweep,
    success_rate,
)
from .robust import (
    ClusterResult,
    PlaneCluster,
    PlaneModel,
    RansacConfig,
    plane_ransac_baseline,
    ransac_eventail,
    sample_five,
    sequential_extract,
)
from .solver import (
    SolverDiagnostics,
    oracle_solve,
    precondition_frame,
    recover_velocity_given_line,
    solve_minimal,
)

__version__ = "0.1.0"
