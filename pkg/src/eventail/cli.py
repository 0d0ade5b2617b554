"""Command-line front end: simulate scenes, fit windows, evaluate, run suites.

Subcommands
    simulate    write events/labels/IMU/trajectory CSVs for a configured scene
    fit         per-window manifold extraction + velocity averaging (JSONL)
    eval        compare fit results against a ground-truth trajectory
    experiment  run one of the named experiment suites

Configuration is JSON with a ``version`` field; unknown keys are rejected.
Command-line flags override config values. Exit codes: 0 success, 1 runtime
failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import events_io
from .egg import (
    CircularArc,
    ConstantAccel,
    ConstantTwist,
    ImuModel,
    NoiseSpec,
    SplineMotion,
    Wireframe,
    corrupt,
    generate_scene,
    sample_trajectory,
    simulate_events,
    simulate_imu,
)
from .errors import AlignmentError, ConfigError, EventailError
from .geometry import CameraModel, quaternion_to_rotation, rotation_at, rotation_log
from .harness import (
    direction_error,
    fit_event_window,
    run_high_dynamics,
    run_motion_violation,
    run_noise_sweep,
)
from .robust import RansacConfig

CONFIG_VERSION = 1


# ---------------------------------------------------------------------------
# config handling


def _load_config(path) -> dict:
    if path is None:
        return {"version": CONFIG_VERSION}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {cfg.get('version')!r}")
    return cfg


def _check_keys(obj: dict, allowed: set, where: str, required: set = frozenset()):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _camera_from_config(cfg: dict) -> CameraModel:
    cam = cfg.get("camera")
    if cam is None:
        return CameraModel(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)
    _check_keys(cam, {"fx", "fy", "cx", "cy", "width", "height"}, "camera",
                {"fx", "fy", "cx", "cy", "width", "height"})
    try:
        return CameraModel(
            fx=float(cam["fx"]), fy=float(cam["fy"]), cx=float(cam["cx"]),
            cy=float(cam["cy"]), width=int(cam["width"]), height=int(cam["height"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid camera: {exc}")


def _scene_from_config(cfg: dict, seed: int) -> Wireframe:
    scene = cfg.get("scene")
    if scene is None:
        raise ConfigError("simulate requires a 'scene' section")
    _check_keys(scene, {"segments", "random"}, "scene")
    if "segments" in scene:
        try:
            return Wireframe(tuple((np.array(p), np.array(q)) for p, q in scene["segments"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene segments: {exc}")
    if "random" in scene:
        rnd = scene["random"]
        _check_keys(rnd, {"count", "bounds"}, "scene.random", {"count"})
        bounds = rnd.get("bounds", [[-2.0, 2.0], [-2.0, 2.0], [1.5, 3.0]])
        try:
            return generate_scene(int(rnd["count"]), tuple(tuple(b) for b in bounds), seed=seed)
        except ValueError as exc:
            raise ConfigError(f"invalid random scene: {exc}")
    raise ConfigError("scene must define 'segments' or 'random'")


def _motion_from_config(cfg: dict):
    motion = cfg.get("motion")
    if motion is None:
        raise ConfigError("simulate requires a 'motion' section")
    kind = motion.get("type")
    try:
        if kind == "constant_twist":
            _check_keys(motion, {"type", "v", "omega"}, "motion", {"v", "omega"})
            return ConstantTwist(v=np.array(motion["v"], dtype=float),
                                 omega=np.array(motion["omega"], dtype=float))
        if kind == "circular_arc":
            _check_keys(
                motion, {"type", "radius", "speed", "axis_a", "axis_b"}, "motion",
                {"radius", "speed"},
            )
            kwargs = {}
            if "axis_a" in motion:
                kwargs["axis_a"] = np.array(motion["axis_a"], dtype=float)
            if "axis_b" in motion:
                kwargs["axis_b"] = np.array(motion["axis_b"], dtype=float)
            return CircularArc(radius=float(motion["radius"]), speed=float(motion["speed"]), **kwargs)
        if kind == "constant_accel":
            _check_keys(motion, {"type", "v0", "a", "omega"}, "motion", {"v0", "a"})
            return ConstantAccel(
                v0=np.array(motion["v0"], dtype=float),
                a=np.array(motion["a"], dtype=float),
                omega=np.array(motion.get("omega", [0.0, 0.0, 0.0]), dtype=float),
            )
        if kind == "spline":
            _check_keys(motion, {"type", "times", "positions", "quaternions"}, "motion",
                        {"times", "positions"})
            return SplineMotion(motion["times"], motion["positions"], motion.get("quaternions"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid motion: {exc}")
    raise ConfigError(f"unknown motion type {kind!r}")


def _imu_from_config(cfg: dict) -> ImuModel:
    imu = cfg.get("imu")
    if imu is None:
        return ImuModel()
    _check_keys(
        imu,
        {"rate", "gyro_bias", "gyro_noise_std", "gyro_random_walk_std",
         "accel_bias", "accel_noise_std", "accel_random_walk_std"},
        "imu",
    )
    try:
        return ImuModel(
            rate=float(imu.get("rate", 200.0)),
            gyro_bias0=np.array(imu.get("gyro_bias", [0.0, 0.0, 0.0]), dtype=float),
            gyro_noise_std=float(imu.get("gyro_noise_std", 0.0)),
            gyro_random_walk_std=float(imu.get("gyro_random_walk_std", 0.0)),
            accel_bias0=np.array(imu.get("accel_bias", [0.0, 0.0, 0.0]), dtype=float),
            accel_noise_std=float(imu.get("accel_noise_std", 0.0)),
            accel_random_walk_std=float(imu.get("accel_random_walk_std", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid imu model: {exc}")


def _noise_from_config(cfg: dict) -> NoiseSpec:
    noise = cfg.get("noise")
    if noise is None:
        return NoiseSpec()
    _check_keys(noise, {"pixel", "timestamp_std", "omega"}, "noise")
    try:
        return NoiseSpec(
            pixel_magnitude=float(noise.get("pixel", 0.0)),
            timestamp_std=float(noise.get("timestamp_std", 0.0)),
            omega_magnitude=float(noise.get("omega", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid noise spec: {exc}")


def _ransac_from_config(cfg: dict, args) -> RansacConfig:
    ransac = cfg.get("ransac", {})
    _check_keys(
        ransac,
        {"max_iterations", "min_iterations", "inlier_threshold", "sampling", "min_inliers",
         "confidence"},
        "ransac",
    )
    threshold = ransac.get("inlier_threshold", 2e-3)
    if getattr(args, "threshold_rad", None) is not None:
        threshold = args.threshold_rad
    try:
        return RansacConfig(
            max_iterations=int(ransac.get("max_iterations", 1000)),
            min_iterations=int(ransac.get("min_iterations", 1)),
            inlier_threshold=float(threshold),
            sampling=str(ransac.get("sampling", "spatiotemporal")),
            min_inliers=int(ransac.get("min_inliers", 50)),
            seed=int(args.seed),
            confidence=float(ransac.get("confidence", 0.999)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid ransac config: {exc}")


def _resolve_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(
        cfg,
        {"version", "seed", "time", "camera", "scene", "motion", "imu", "noise",
         "trajectory_rate"},
        "config",
        {"scene", "motion", "time"},
    )
    seed = _resolve_seed(args, cfg)
    time_cfg = cfg["time"]
    _check_keys(time_cfg, {"t0", "t1"}, "time", {"t0", "t1"})
    t0, t1 = float(time_cfg["t0"]), float(time_cfg["t1"])
    if t1 <= t0:
        raise ConfigError("time.t1 must exceed time.t0")
    cam = _camera_from_config(cfg)
    scene = _scene_from_config(cfg, seed)
    motion = _motion_from_config(cfg)
    imu = _imu_from_config(cfg)
    noise = _noise_from_config(cfg)

    events, labels = simulate_events(scene, motion, cam, t0, t1)
    if noise.pixel_magnitude > 0 or noise.timestamp_std > 0:
        events, labels = corrupt(events, noise, seed=seed, labels=labels)
    gyro = simulate_imu(motion, imu, t0, t1, seed=seed)
    trajectory = sample_trajectory(motion, t0, t1, rate=float(cfg.get("trajectory_rate", 1000.0)))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events_io.write_events(out / "events.csv", events)
    events_io.write_labels(out / "labels.csv", labels)
    events_io.write_imu(out / "imu.csv", gyro)
    events_io.write_trajectory(out / "trajectory.csv", trajectory)
    print(f"wrote {len(events)} events over {len(scene)} segments to {out}")
    return 0


def _fit_one_window(bearings, cfg, max_models, t_s):
    fit = fit_event_window(bearings, cfg, max_models=max_models, t_s=t_s)
    clusters = [
        {
            "y_a": c.model.line.y_a,
            "z_a": c.model.line.z_a,
            "y_b": c.model.line.y_b,
            "z_b": c.model.line.z_b,
            "v_y": c.model.v_y,
            "v_z": c.model.v_z,
            "rotation": c.model.precondition_rotation.tolist(),
            "n_inliers": int(len(c.inlier_indices)),
            "inlier_ratio": float(c.inlier_ratio),
        }
        for c in fit.clusters
    ]
    velocity = None
    if fit.estimate is not None:
        velocity = {
            "v": [float(x) for x in fit.estimate.v],
            "lambdas": [float(x) for x in fit.estimate.lambdas],
            "smallest_eigenvalue": float(fit.estimate.smallest_eigenvalue),
        }
    return {
        "schema": "eventail-fit/1",
        "t_s": float(t_s),
        "delta_t": float(fit.delta_t),
        "n_events": int(fit.n_events),
        "status": fit.status,
        "clusters": clusters,
        "velocity": velocity,
    }


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(
        cfg,
        {"version", "seed", "camera", "ransac", "window_sec", "downsample", "max_clusters"},
        "config",
    )
    seed = _resolve_seed(args, cfg)
    args.seed = seed
    cam = _camera_from_config(cfg)
    ransac = _ransac_from_config(cfg, args)
    window_sec = args.window_sec if args.window_sec is not None else float(cfg.get("window_sec", 0.3))
    factor = args.downsample if args.downsample is not None else int(cfg.get("downsample", 1))
    max_clusters = (
        args.max_clusters if args.max_clusters is not None else int(cfg.get("max_clusters", 5))
    )
    if window_sec <= 0:
        raise ConfigError("window duration must be positive")

    try:
        events = events_io.read_events(args.events)
        gyro = events_io.read_imu(args.imu)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    events = events_io.downsample(events, factor)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.jsonl"
    if len(events) == 0:
        results_path.write_text("")
        print("no events; wrote empty results")
        return 0

    t_min = events[0].t
    t_max = events[-1].t
    n_windows = max(1, int(np.ceil((t_max - t_min) / window_sec - 1e-9)))
    times = np.array([e.t_us for e in events])
    windows = []
    for k in range(n_windows):
        lo = t_min + k * window_sec
        hi = lo + window_sec
        lo_us = int(np.round(lo * events_io.US_PER_S))
        hi_us = int(np.round(hi * events_io.US_PER_S))
        i0 = int(np.searchsorted(times, lo_us, side="left"))
        side = "right" if k == n_windows - 1 else "left"
        i1 = int(np.searchsorted(times, hi_us, side=side))
        windows.append((0.5 * (lo + hi), events[i0:i1]))

    def process(item):
        t_s, chunk = item
        window = events_io.TimeWindow(t_s=t_s, delta_t=window_sec / 2.0)
        if len(chunk) < 5:
            return {
                "schema": "eventail-fit/1",
                "t_s": float(t_s),
                "delta_t": window.delta_t,
                "n_events": len(chunk),
                "status": "insufficient_events",
                "clusters": [],
                "velocity": None,
            }
        bearings = events_io.unrotate_events(chunk, gyro, window, cam)
        return _fit_one_window(bearings, ransac, max_clusters, t_s)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(process, windows))
    else:
        records = [process(w) for w in windows]

    with open(results_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    n_ok = sum(1 for r in records if r["status"] == "ok")
    print(f"fit {len(records)} windows ({n_ok} ok) -> {results_path}")
    return 0


def _interp_trajectory(samples, t):
    times = np.array([s.t for s in samples])
    if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
        return None
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(samples) - 2))
    s0, s1 = samples[i], samples[i + 1]
    h = s1.t - s0.t
    a = 0.0 if h <= 0 else float(np.clip((t - s0.t) / h, 0.0, 1.0))
    v = (1 - a) * s0.velocity + a * s1.velocity
    R0 = quaternion_to_rotation(s0.quaternion)
    R1 = quaternion_to_rotation(s1.quaternion)
    R = R0 @ rotation_at(rotation_log(R0.T @ R1), a)
    return R, v


def cmd_eval(args) -> int:
    try:
        with open(args.results) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        trajectory = events_io.read_trajectory(args.trajectory)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if len(trajectory) < 2:
        raise AlignmentError("trajectory needs at least two samples")
    threshold = args.threshold_rad if args.threshold_rad is not None else 0.7

    rows = []
    overlap = 0
    for rec in records:
        t_s = float(rec["t_s"])
        entry = {"t_s": t_s, "status": rec["status"], "phi": None, "success": False}
        interp = _interp_trajectory(trajectory, t_s)
        if interp is not None:
            overlap += 1
            if rec["status"] == "ok" and rec["velocity"] is not None:
                R, v_world = interp
                v_gt_cam = R.T @ v_world
                phi = direction_error(np.array(rec["velocity"]["v"]), v_gt_cam)
                entry["phi"] = phi
                entry["success"] = bool(phi < threshold)
        rows.append(entry)
    if records and overlap == 0:
        raise AlignmentError("no fit window overlaps the trajectory timestamps")

    phis = [r["phi"] for r in rows if r["phi"] is not None]
    report = {
        "threshold": threshold,
        "n_windows": len(rows),
        "n_evaluated": len(phis),
        "phi_mean": float(np.mean(phis)) if phis else None,
        "phi_median": float(np.median(phis)) if phis else None,
        "success_rate": 100.0 * sum(r["success"] for r in rows) / len(rows) if rows else None,
        "windows": rows,
    }
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _json_dump(report, out / "report.json")
    with open(out / "report.csv", "w") as fh:
        fh.write("t_s,status,phi,success\n")
        for r in rows:
            phi = "" if r["phi"] is None else repr(r["phi"])
            fh.write(f"{r['t_s']!r},{r['status']},{phi},{int(r['success'])}\n")
    print(
        f"evaluated {len(phis)}/{len(rows)} windows; "
        f"mean={report['phi_mean']} median={report['phi_median']} "
        f"success={report['success_rate']}%"
    )
    return 0


def cmd_experiment(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else int(args.seed)
    if args.suite == "noise-sweep":
        table = run_noise_sweep(seed=seed, n_configs=args.configs, n_evals=args.evals)
        table.to_csv(out / "noise_sweep.csv")
        zero = [r for r in table.rows if r.level == 0.0]
        _json_dump(
            {
                "suite": "noise-sweep",
                "seed": seed,
                "max_zero_noise_median": max(r.median for r in zero),
                "rows": len(table.rows),
            },
            out / "noise_sweep.json",
        )
        print(f"noise sweep: {len(table.rows)} rows -> {out/'noise_sweep.csv'}")
        return 0
    if args.suite == "motion-violation":
        table = run_motion_violation(seed=seed, n_seeds=args.evals)
        table.to_csv(out / "motion_violation.csv")
        _json_dump(
            {"suite": "motion-violation", "seed": seed, "rows": len(table.rows)},
            out / "motion_violation.json",
        )
        print(f"motion violation: {len(table.rows)} rows -> {out/'motion_violation.csv'}")
        return 0
    if args.suite == "high-dynamics":
        report = run_high_dynamics(seed=seed)
        _json_dump({"suite": "high-dynamics", "seed": seed, **report.to_dict()},
                   out / "high_dynamics.json")
        print(
            f"high dynamics: {report.n_clusters} clusters, "
            f"ratios={[round(r, 4) for r in report.inlier_ratios]}, phi={report.phi:.4f}, "
            f"plane clusters={report.plane_cluster_count}"
        )
        return 0
    print(f"error: unknown experiment suite {args.suite!r}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventail",
        description="Event-camera linear velocity bootstrapping from line manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic scene")
    p_sim.add_argument("--config", required=True, help="JSON scene/motion config")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out-dir", default="out")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit manifolds and average velocity per window")
    p_fit.add_argument("events", help="events CSV")
    p_fit.add_argument("imu", help="IMU CSV")
    p_fit.add_argument("--config", default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--jobs", type=int, default=1)
    p_fit.add_argument("--window-sec", type=float, default=None)
    p_fit.add_argument("--downsample", type=int, default=None)
    p_fit.add_argument("--threshold-rad", type=float, default=None)
    p_fit.add_argument("--max-clusters", type=int, default=None)
    p_fit.add_argument("--out-dir", default="out")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("eval", help="score fit results against a trajectory")
    p_eval.add_argument("results", help="results JSONL from fit")
    p_eval.add_argument("trajectory", help="trajectory CSV")
    p_eval.add_argument("--threshold-rad", type=float, default=None)
    p_eval.add_argument("--out-dir", default="out")
    p_eval.set_defaults(func=cmd_eval)

    p_exp = sub.add_parser("experiment", help="run a named experiment suite")
    p_exp.add_argument("suite", choices=["noise-sweep", "motion-violation", "high-dynamics"])
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--configs", type=int, default=15, help="noise-sweep geometry configs")
    p_exp.add_argument("--evals", type=int, default=20, help="evaluations/seeds per cell")
    p_exp.add_argument("--out-dir", default="out")
    p_exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EventailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
