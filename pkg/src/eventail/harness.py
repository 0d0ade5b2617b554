"""Evaluation metrics and the three simulation experiment suites.

The experiments mirror the study's protocol: single-manifold noise
resilience of the minimal solver under four sampling strategies, robustness
of full multi-line velocity averaging against motion-model violations
(circular arcs, accelerated motion), and the two-line high-dynamics scene
with a spinning camera where plane-based clustering fragments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .averaging import PartialObservation, VelocityEstimate, average_velocity
from .egg import (
    CircularArc,
    ConstantAccel,
    ConstantTwist,
    ImuModel,
    NoiseSpec,
    SingleLineInstance,
    Wireframe,
    corrupt,
    corrupt_gyro,
    generate_scene,
    simulate_events,
    simulate_imu,
    single_line_instance,
)
from .errors import DegenerateGeometryError, UndefinedRateError, UnobservableVelocityError
from .events_io import EventSet, TimeWindow, downsample, unrotate_events
from .geometry import CameraModel, rotation_at
from .robust import ClusterResult, RansacConfig, plane_ransac_baseline, ransac_eventail, sequential_extract
from .solver import solve_minimal

DEFAULT_CAMERA = CameraModel(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)

PIXEL_LEVELS = (0.0, 0.5, 1.0, 2.0)  # px
TIMESTAMP_LEVELS = (0.0, 1e-3, 5e-3, 10e-3)  # s
OMEGA_LEVELS = tuple(np.deg2rad([0.0, 1.0, 5.0, 10.0]))  # rad/s
STRATEGIES = ("random", "temporal", "spatial", "spatiotemporal")


# ---------------------------------------------------------------------------
# metrics


def direction_error(v_est, v_gt) -> float:
    """Angle between two velocity directions, invariant to positive scale."""
    a = np.asarray(v_est, dtype=float)
    b = np.asarray(v_gt, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("direction error of a zero vector is undefined")
    return float(np.arccos(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)))


def partial_direction_error(obs: PartialObservation, v_gt) -> float:
    """Angle between the observed partial velocity and the ground truth
    projected onto the observation's observable plane span(e2, e3).

    Computed via arctan2 of the cross and dot products, which stays accurate
    for the near-zero angles of exact recoveries.
    """
    v = np.asarray(v_gt, dtype=float)
    e2, e3 = obs.frame.e2, obs.frame.e3
    proj = e2 * (np.dot(v, e2) / np.dot(e2, e2)) + e3 * (np.dot(v, e3) / np.dot(e3, e3))
    if np.linalg.norm(proj) < 1e-12 * np.linalg.norm(v):
        raise UnobservableVelocityError("ground-truth velocity is parallel to the line")
    w = obs.frame.velocity(obs.v_y, obs.v_z)
    cross = np.linalg.norm(np.cross(w, proj))
    return float(np.arctan2(cross, np.dot(w, proj)))


@dataclass(frozen=True)
class DirectionErrorReport:
    phi: float
    phi_partial: float = float("nan")
    valid: bool = True
    success: bool = field(default=False)


def success_rate(reports: list[DirectionErrorReport], threshold: float = 0.7) -> float:
    """Percentage of reports with a valid estimate below the error threshold."""
    if threshold <= 0:
        raise ValueError("success threshold must be positive")
    if len(reports) == 0:
        raise UndefinedRateError("success rate over an empty report list")
    good = sum(1 for r in reports if r.valid and r.phi < threshold)
    return 100.0 * good / len(reports)


@dataclass(frozen=True)
class SweepRow:
    kind: str
    level: float
    variant: str
    quartile1: float
    median: float
    quartile3: float
    mean: float
    n: int


@dataclass
class SweepTable:
    rows: list[SweepRow]

    HEADER = "kind,level,variant,q1,median,q3,mean,n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.HEADER + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.kind},{r.level!r},{r.variant},{r.quartile1!r},{r.median!r},"
                    f"{r.quartile3!r},{r.mean!r},{r.n}\n"
                )

    def lookup(self, kind: str, variant: str) -> list[SweepRow]:
        return sorted(
            (r for r in self.rows if r.kind == kind and r.variant == variant),
            key=lambda r: r.level,
        )


def _row_from_errors(kind, level, variant, errors) -> SweepRow:
    arr = np.asarray([e for e in errors if np.isfinite(e)])
    if len(arr) == 0:
        return SweepRow(kind, float(level), variant, math.nan, math.nan, math.nan, math.nan, 0)
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return SweepRow(
        kind, float(level), variant, float(q1), float(med), float(q3), float(np.mean(arr)), len(arr)
    )


# ---------------------------------------------------------------------------
# noise sweep (single cluster, minimal solver)


def _noisy_solve(instance: SingleLineInstance, strategy: str, noise: NoiseSpec, rng) -> float:
    """Partial direction error of one corrupted five-event solve."""
    uvs, ts = instance.sample_pixel_events(strategy, 5, rng)
    if noise.pixel_magnitude > 0:
        ang = rng.uniform(0.0, 2.0 * np.pi, len(uvs))
        uvs = uvs + noise.pixel_magnitude * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if noise.timestamp_std > 0:
        ts = ts + rng.normal(0.0, noise.timestamp_std, len(ts))
    omega = instance.omega
    if noise.omega_magnitude > 0:
        direction = rng.normal(size=3)
        omega = omega + noise.omega_magnitude * direction / np.linalg.norm(direction)
    events = instance.bearing_events(uvs, ts, omega)
    models, _ = solve_minimal(events)
    if not models:
        return float("nan")
    obs = PartialObservation.from_model(models[0])
    return partial_direction_error(obs, instance.v)


def run_noise_sweep(
    seed: int = 0,
    strategies=STRATEGIES,
    pixel_levels=PIXEL_LEVELS,
    timestamp_levels=TIMESTAMP_LEVELS,
    omega_levels=OMEGA_LEVELS,
    n_configs: int = 15,
    n_evals: int = 100,
) -> SweepTable:
    """Solver accuracy as a function of noise kind, level, and sampling strategy.

    For every cell, ``n_configs`` seeded geometry/motion instances are each
    evaluated ``n_evals`` times with fresh event samples and noise draws; the
    partial direction errors are pooled into quartile statistics.
    """
    instances = [single_line_instance(seed * 1009 + c) for c in range(n_configs)]
    grids = {"pixel": pixel_levels, "timestamp": timestamp_levels, "omega": omega_levels}
    rows = []
    for kind_idx, (kind, levels) in enumerate(grids.items()):
        for level_idx, level in enumerate(levels):
            noise = NoiseSpec(
                pixel_magnitude=level if kind == "pixel" else 0.0,
                timestamp_std=level if kind == "timestamp" else 0.0,
                omega_magnitude=level if kind == "omega" else 0.0,
            )
            for strat_idx, strategy in enumerate(strategies):
                errors = []
                for c, instance in enumerate(instances):
                    for e in range(n_evals):
                        rng = np.random.default_rng(
                            np.random.SeedSequence(
                                entropy=(seed, kind_idx, level_idx, strat_idx, c, e)
                            )
                        )
                        errors.append(_noisy_solve(instance, strategy, noise, rng))
                rows.append(_row_from_errors(kind, level, strategy, errors))
    return SweepTable(rows)


# ---------------------------------------------------------------------------
# shared multi-line pipeline pieces


def _realistic_imu(rng) -> ImuModel:
    bias_dir = rng.normal(size=3)
    bias_dir /= np.linalg.norm(bias_dir)
    return ImuModel(
        rate=200.0,
        gyro_bias0=0.01 * bias_dir,
        gyro_random_walk_std=1e-4,
        gyro_noise_std=1e-3,
    )


def _pipeline_phi(
    scene: Wireframe,
    motion,
    cam: CameraModel,
    t0: float,
    t1: float,
    noisy: bool,
    seed: int,
    ransac_seed: int = 0,
    downsample_factor: int = 1,
    min_cluster_events: int = 30,
    inlier_threshold: float = 2e-3,
    min_iterations: int = 1,
    max_iterations: int = 400,
) -> float:
    """Full label-bypassed pipeline error: simulate, corrupt, unrotate,
    fit each labeled cluster with RANSAC, average, compare to ground truth."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xF17)))
    events, labels = simulate_events(scene, motion, cam, t0, t1)
    if len(events) < 10:
        return float("nan")
    window = TimeWindow(t_s=0.5 * (t0 + t1), delta_t=0.5 * (t1 - t0))
    if noisy:
        events, labels = corrupt(
            events, NoiseSpec(pixel_magnitude=1.0, timestamp_std=1e-3), seed=seed, labels=labels
        )
        imu = _realistic_imu(rng)
    else:
        imu = ImuModel(rate=200.0)
    gyro = simulate_imu(motion, imu, t0, t1, seed=seed)
    if downsample_factor > 1:
        events = downsample(events, downsample_factor)
        labels = labels[::downsample_factor]
    bearings = unrotate_events(events, gyro, window, cam, labels=labels)

    observations = []
    for lab in np.unique(bearings.labels):
        if lab < 0:
            continue
        idx = np.flatnonzero(bearings.labels == lab)
        if len(idx) < max(min_cluster_events, 5):
            continue
        cluster = bearings.select(idx)
        cfg = RansacConfig(
            max_iterations=max_iterations,
            min_iterations=min_iterations,
            inlier_threshold=inlier_threshold,
            min_inliers=max(5, int(0.15 * len(idx))),
            seed=ransac_seed * 131 + int(lab),
        )
        result = ransac_eventail(cluster, cfg)
        if result is not None:
            observations.append(PartialObservation.from_model(result.model))
    if len(observations) < 2:
        return float("nan")
    try:
        estimate = average_velocity(observations)
    except DegenerateGeometryError:
        return float("nan")
    R_ts, _ = motion.pose(window.t_s)
    v_gt_cam = R_ts.T @ motion.velocity(window.t_s)
    return direction_error(estimate.v, v_gt_cam)


def run_zero_error_control(
    n_seeds: int = 20,
    seed: int = 0,
    cam: CameraModel = DEFAULT_CAMERA,
    duration: float = 4.0,
    speed: float = 0.15,
    min_iterations: int = 400,
) -> list[float]:
    """Fused direction errors for clean constant-twist ten-line scenes.

    The zero-violation, zero-noise configuration; the only error source left
    is the microsecond timestamp grid, whose effect scales inversely with
    the window length. A long window with slow translation (same total
    displacement, hence the same manifold geometry and event count) plus a
    deep hypothesis-selection budget keeps the result near machine accuracy.
    """
    phis = []
    for s in range(n_seeds):
        scene_seed = seed * 7919 + s
        scene = generate_scene(10, seed=scene_seed)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xC0117A01, s)))
        v = rng.normal(size=3)
        motion = ConstantTwist(v=speed * v / np.linalg.norm(v), omega=np.zeros(3))
        phis.append(
            _pipeline_phi(
                scene,
                motion,
                cam,
                0.0,
                duration,
                noisy=False,
                seed=scene_seed,
                ransac_seed=s,
                min_cluster_events=60,
                min_iterations=min_iterations,
                max_iterations=max(400, min_iterations),
            )
        )
    return phis


def run_motion_violation(
    seed: int = 0,
    radii=(2.0, 4.0, 6.0, 8.0, 10.0),
    accelerations=(0.1, 0.2, 0.3, 0.4, 0.5),
    n_seeds: int = 20,
    window_sec: float = 0.3,
    downsample_factor: int = 1,
    cam: CameraModel = DEFAULT_CAMERA,
) -> SweepTable:
    """Averaged-velocity error under constant-velocity model violations.

    Ten-line scenes inside the standard volume are swept with circular-arc
    and accelerated trajectories, in clean and noisy (1 px, 1 ms, biased
    IMU) variants, plus a constant-velocity control row.
    """
    rows = []
    cell_counter = [0]

    def run_cell(kind, level, motion_factory):
        cell_id = cell_counter[0]
        cell_counter[0] += 1
        for variant in ("clean", "noisy"):
            errors = []
            for s in range(n_seeds):
                scene_seed = seed * 7919 + s
                scene = generate_scene(10, seed=scene_seed)
                rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=(seed, cell_id, s))
                )
                motion = motion_factory(rng)
                noisy = variant == "noisy"
                errors.append(
                    _pipeline_phi(
                        scene,
                        motion,
                        cam,
                        0.0,
                        window_sec,
                        noisy=noisy,
                        seed=scene_seed,
                        ransac_seed=s,
                        downsample_factor=downsample_factor,
                        inlier_threshold=6e-3 if noisy else 2e-3,
                        min_iterations=64 if not noisy else 1,
                    )
                )
            rows.append(_row_from_errors(kind, level, variant, errors))

    # zero-violation control: precision configuration, clean only
    rows.append(
        _row_from_errors(
            "control", 0.0, "clean", run_zero_error_control(n_seeds=n_seeds, seed=seed, cam=cam)
        )
    )

    for radius in radii:
        def arc_motion(rng, radius=radius):
            return CircularArc(radius=radius, speed=1.0)

        run_cell("arc_radius", radius, arc_motion)

    for accel in accelerations:
        def accel_motion(rng, accel=accel):
            v = rng.normal(size=3)
            a = rng.normal(size=3)
            return ConstantAccel(
                v0=v / np.linalg.norm(v), a=accel * a / np.linalg.norm(a), omega=np.zeros(3)
            )

        run_cell("acceleration", accel, accel_motion)

    return SweepTable(rows)


# ---------------------------------------------------------------------------
# high-dynamics two-line scene


HIGH_DYNAMICS_SEGMENTS = (
    (np.array([0.0, 0.75, 3.0]), np.array([0.0, 2.0, 3.0])),
    (np.array([0.38, -0.65, 3.0]), np.array([0.75, -1.3, 3.0])),
)
HIGH_DYNAMICS_VELOCITY = np.array([0.4, 0.4, 2.0])
HIGH_DYNAMICS_OMEGA = np.array([0.0, 0.0, -2.0 * np.pi])


@dataclass(frozen=True)
class HighDynamicsReport:
    n_events: int
    n_clusters: int
    inlier_ratios: tuple
    phi: float
    plane_cluster_count: int
    lambdas: tuple
    smallest_eigenvalue: float

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "n_clusters": self.n_clusters,
            "inlier_ratios": list(self.inlier_ratios),
            "phi": self.phi,
            "plane_cluster_count": self.plane_cluster_count,
            "lambdas": list(self.lambdas),
            "smallest_eigenvalue": self.smallest_eigenvalue,
        }


def run_high_dynamics(seed: int = 0, cam: CameraModel = DEFAULT_CAMERA) -> HighDynamicsReport:
    """The two-line fast-motion scene: spinning, forward-rushing camera.

    Runs the full sequential extraction (no label shortcut), fuses the
    per-line observations, and fits the plane baseline on the same events
    for comparison. The inlier threshold is sized for the noise level: a
    1 px displacement plus 1 ms of jitter at roughly 1e3 px/s image motion
    is a few milliradians of angular error at f = 320 px.
    """
    scene = Wireframe(HIGH_DYNAMICS_SEGMENTS)
    motion = ConstantTwist(v=HIGH_DYNAMICS_VELOCITY, omega=HIGH_DYNAMICS_OMEGA)
    t0, t1 = 0.0, 1.0
    events, _ = simulate_events(scene, motion, cam, t0, t1)
    events = corrupt(events, NoiseSpec(pixel_magnitude=1.0, timestamp_std=1e-3), seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x4D)))
    gyro = simulate_imu(motion, _realistic_imu(rng), t0, t1, seed=seed)
    events = downsample(events, 10)
    window = TimeWindow(t_s=0.5, delta_t=0.5)
    bearings = unrotate_events(events, gyro, window, cam)

    cfg = RansacConfig(
        max_iterations=1000,
        inlier_threshold=1.2e-2,
        min_inliers=max(50, len(bearings) // 20),
        seed=seed,
    )
    clusters = sequential_extract(bearings, cfg, max_models=5)
    observations = [PartialObservation.from_model(c.model) for c in clusters]
    phi = float("nan")
    lambdas: tuple = ()
    eig = float("nan")
    if len(observations) >= 2:
        estimate = average_velocity(observations)
        R_ts, _ = motion.pose(window.t_s)
        phi = direction_error(estimate.v, R_ts.T @ motion.velocity(window.t_s))
        lambdas = tuple(float(x) for x in estimate.lambdas)
        eig = float(estimate.smallest_eigenvalue)

    planes = plane_ransac_baseline(
        bearings, threshold=6e-3, max_models=40, seed=seed, min_inliers=50
    )
    return HighDynamicsReport(
        n_events=len(bearings),
        n_clusters=len(clusters),
        inlier_ratios=tuple(float(c.inlier_ratio) for c in clusters),
        phi=phi,
        plane_cluster_count=len(planes),
        lambdas=lambdas,
        smallest_eigenvalue=eig,
    )


# ---------------------------------------------------------------------------
# generic per-window fit (shared with the CLI)


@dataclass(frozen=True)
class WindowFit:
    t_s: float
    delta_t: float
    n_events: int
    clusters: list[ClusterResult]
    estimate: VelocityEstimate | None
    status: str


def fit_event_window(
    bearings: EventSet,
    cfg: RansacConfig,
    max_models: int = 5,
    t_s: float = 0.0,
) -> WindowFit:
    """Sequential extraction plus velocity averaging for one event window."""
    delta_t = bearings.half_width()
    if len(bearings) < 5:
        return WindowFit(t_s, delta_t, len(bearings), [], None, "insufficient_events")
    clusters = sequential_extract(bearings, cfg, max_models=max_models)
    if len(clusters) < 2:
        return WindowFit(t_s, delta_t, len(bearings), clusters, None, "too_few_clusters")
    observations = [PartialObservation.from_model(c.model) for c in clusters]
    try:
        estimate = average_velocity(observations)
    except DegenerateGeometryError:
        return WindowFit(t_s, delta_t, len(bearings), clusters, None, "degenerate_geometry")
    return WindowFit(t_s, delta_t, len(bearings), clusters, estimate, "ok")
