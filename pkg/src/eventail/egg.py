"""Synthetic event/IMU generator: wireframe scenes swept by a moving camera.

Scenes are transparent 3D wireframes (finite segments, world frame). The
camera follows an analytic motion model; an event fires whenever the moving
projection of a segment crosses a pixel center, with the crossing time
resolved by coarse stepping (bounded to sub-pixel image motion) followed by
bisection. Timestamps are accurate to the requested resolution (1 us by
default) and rounded to integer microseconds in the emitted events.

Pose convention: ``pose_at`` returns (R, p) with R mapping camera-frame
vectors into the world frame and p the camera center in world coordinates.
The world frame coincides with the camera frame at the motion's start unless
a starting pose is given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MotionDomainError
from .events_io import Event, EventSet, ImuSample, TrajectorySample, US_PER_S
from .geometry import (
    CameraModel,
    PluckerLine,
    backproject,
    project_many,
    rotation_at,
    rotation_log,
    rotation_to_quaternion,
    skew,
)

_Z_MIN = 0.05  # clip segments closer than this to the image plane (meters)


def _rotations_batch(omega, dts: np.ndarray) -> np.ndarray:
    """exp([omega]_x * dt) for an array of dt values."""
    w = np.asarray(omega, dtype=float)
    dts = np.asarray(dts, dtype=float)
    norm = np.linalg.norm(w)
    out = np.broadcast_to(np.eye(3), (len(dts), 3, 3)).copy()
    if norm == 0.0:
        return out
    K = skew(w / norm)
    K2 = K @ K
    theta = norm * dts
    a = np.sin(theta)
    b = 1.0 - np.cos(theta)
    out += a[:, None, None] * K + b[:, None, None] * K2
    return out


@dataclass(frozen=True)
class Wireframe:
    """Transparent scene made of finite 3D line segments (world frame)."""

    segments: tuple

    def __post_init__(self):
        segs = []
        for p, q in self.segments:
            p = np.asarray(p, dtype=float)
            q = np.asarray(q, dtype=float)
            if p.shape != (3,) or q.shape != (3,):
                raise ValueError("segment endpoints must be 3-vectors")
            if np.allclose(p, q):
                raise ValueError("segment endpoints must be distinct")
            segs.append((p, q))
        object.__setattr__(self, "segments", tuple(segs))

    def __len__(self):
        return len(self.segments)


class MotionModel:
    """Base camera trajectory; subclasses provide closed-form kinematics."""

    domain: tuple | None = None

    def _check(self, t):
        if self.domain is not None:
            lo, hi = self.domain
            if np.any(np.asarray(t) < lo - 1e-12) or np.any(np.asarray(t) > hi + 1e-12):
                raise MotionDomainError(f"time {t} outside motion domain [{lo}, {hi}]")

    def pose(self, t: float):
        raise NotImplementedError

    def poses(self, ts: np.ndarray):
        self._check(ts)
        Rs = np.empty((len(ts), 3, 3))
        ps = np.empty((len(ts), 3))
        for i, t in enumerate(ts):
            Rs[i], ps[i] = self.pose(float(t))
        return Rs, ps

    def velocity(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def omega_body(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def acceleration(self, t: float) -> np.ndarray:
        """World-frame acceleration; default central difference of velocity."""
        h = 1e-5
        return (self.velocity(t + h) - self.velocity(t - h)) / (2 * h)


@dataclass(frozen=True)
class ConstantTwist(MotionModel):
    """Constant linear velocity (start frame) and constant body angular rate."""

    v: np.ndarray
    omega: np.ndarray
    t0: float = 0.0
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "R0", np.asarray(self.R0, dtype=float))

    def pose(self, t):
        dt = t - self.t0
        return self.R0 @ rotation_at(self.omega, dt), self.p0 + (self.R0 @ self.v) * dt

    def poses(self, ts):
        dts = np.asarray(ts, dtype=float) - self.t0
        Rs = np.einsum("ij,njk->nik", self.R0, _rotations_batch(self.omega, dts))
        ps = self.p0[None, :] + np.outer(dts, self.R0 @ self.v)
        return Rs, ps

    def velocity(self, t):
        return self.R0 @ self.v

    def omega_body(self, t):
        return self.omega

    def acceleration(self, t):
        return np.zeros(3)


@dataclass(frozen=True)
class CircularArc(MotionModel):
    """Circular translation at constant speed with a fixed orientation.

    The circle lies in the plane spanned by ``axis_a`` (radial, from circle
    center to the start point) and ``axis_b`` (initial velocity direction).
    """

    radius: float
    speed: float
    t0: float = 0.0
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    axis_a: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    axis_b: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("arc radius must be positive")
        a = np.asarray(self.axis_a, dtype=float)
        b = np.asarray(self.axis_b, dtype=float)
        a = a / np.linalg.norm(a)
        b = b - a * np.dot(a, b)
        b = b / np.linalg.norm(b)
        object.__setattr__(self, "axis_a", a)
        object.__setattr__(self, "axis_b", b)
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "R0", np.asarray(self.R0, dtype=float))

    @property
    def center(self) -> np.ndarray:
        return self.p0 - self.radius * self.axis_a

    def _theta(self, t):
        return (self.speed / self.radius) * (np.asarray(t, dtype=float) - self.t0)

    def pose(self, t):
        th = self._theta(t)
        p = self.center + self.radius * (np.cos(th) * self.axis_a + np.sin(th) * self.axis_b)
        return self.R0.copy(), p

    def poses(self, ts):
        th = self._theta(ts)
        ps = (
            self.center[None, :]
            + self.radius * np.cos(th)[:, None] * self.axis_a[None, :]
            + self.radius * np.sin(th)[:, None] * self.axis_b[None, :]
        )
        Rs = np.broadcast_to(self.R0, (len(ts), 3, 3)).copy()
        return Rs, ps

    def velocity(self, t):
        th = self._theta(t)
        return self.speed * (-np.sin(th) * self.axis_a + np.cos(th) * self.axis_b)

    def omega_body(self, t):
        return np.zeros(3)

    def acceleration(self, t):
        th = self._theta(t)
        return -(self.speed**2 / self.radius) * (
            np.cos(th) * self.axis_a + np.sin(th) * self.axis_b
        )


@dataclass(frozen=True)
class ConstantAccel(MotionModel):
    """Linearly accelerating translation with constant body angular rate."""

    v0: np.ndarray
    a: np.ndarray
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t0: float = 0.0
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("v0", "a", "omega", "p0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "R0", np.asarray(self.R0, dtype=float))

    def pose(self, t):
        dt = t - self.t0
        p = self.p0 + self.R0 @ (self.v0 * dt + 0.5 * self.a * dt * dt)
        return self.R0 @ rotation_at(self.omega, dt), p

    def poses(self, ts):
        dts = np.asarray(ts, dtype=float) - self.t0
        Rs = np.einsum("ij,njk->nik", self.R0, _rotations_batch(self.omega, dts))
        ps = (
            self.p0[None, :]
            + np.outer(dts, self.R0 @ self.v0)
            + 0.5 * np.outer(dts**2, self.R0 @ self.a)
        )
        return Rs, ps

    def velocity(self, t):
        return self.R0 @ (self.v0 + self.a * (t - self.t0))

    def omega_body(self, t):
        return self.omega

    def acceleration(self, t):
        return self.R0 @ self.a


class SplineMotion(MotionModel):
    """Cubic-Hermite position interpolation with piecewise-slerp orientation.

    Control poses are given at strictly increasing knot times; evaluation
    outside the knot span raises MotionDomainError.
    """

    def __init__(self, times, positions, quaternions=None):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        if len(self.times) < 2:
            raise ValueError("spline needs at least two knots")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("spline knot times must be strictly increasing")
        n = len(self.times)
        if quaternions is None:
            self.rotations = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        else:
            from .geometry import quaternion_to_rotation

            self.rotations = np.array([quaternion_to_rotation(q) for q in quaternions])
        self.domain = (float(self.times[0]), float(self.times[-1]))
        # finite-difference tangents (Catmull-Rom style)
        self.tangents = np.empty_like(self.positions)
        for i in range(n):
            lo = max(i - 1, 0)
            hi = min(i + 1, n - 1)
            self.tangents[i] = (self.positions[hi] - self.positions[lo]) / (
                self.times[hi] - self.times[lo]
            )
        self.omega_segments = np.array(
            [
                rotation_log(self.rotations[i].T @ self.rotations[i + 1])
                / (self.times[i + 1] - self.times[i])
                for i in range(n - 1)
            ]
        )

    def _segment(self, t):
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(k, 0), len(self.times) - 2)

    def pose(self, t):
        self._check(t)
        k = self._segment(t)
        h = self.times[k + 1] - self.times[k]
        s = (t - self.times[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        p = (
            h00 * self.positions[k]
            + h10 * h * self.tangents[k]
            + h01 * self.positions[k + 1]
            + h11 * h * self.tangents[k + 1]
        )
        R = self.rotations[k] @ rotation_at(self.omega_segments[k], t - self.times[k])
        return R, p

    def velocity(self, t):
        self._check(t)
        k = self._segment(t)
        h = self.times[k + 1] - self.times[k]
        s = (t - self.times[k]) / h
        d00 = (6 * s**2 - 6 * s) / h
        d10 = 3 * s**2 - 4 * s + 1
        d01 = (-6 * s**2 + 6 * s) / h
        d11 = 3 * s**2 - 2 * s
        return (
            d00 * self.positions[k]
            + d10 * self.tangents[k]
            + d01 * self.positions[k + 1]
            + d11 * self.tangents[k + 1]
        )

    def omega_body(self, t):
        self._check(t)
        return self.omega_segments[self._segment(t)]


def pose_at(motion: MotionModel, t: float):
    """(rotation camera-to-world, camera center) at time t."""
    motion._check(t)
    return motion.pose(t)


def velocity_at(motion: MotionModel, t: float) -> np.ndarray:
    motion._check(t)
    return motion.velocity(t)


# ---------------------------------------------------------------------------
# noise and IMU models


@dataclass(frozen=True)
class ImuModel:
    """Gyro/accelerometer error model: initial bias, random walk, white noise."""

    rate: float = 200.0
    gyro_bias0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_random_walk_std: float = 0.0
    gyro_noise_std: float = 0.0
    accel_bias0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_random_walk_std: float = 0.0
    accel_noise_std: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("IMU rate must be positive")
        stds = (
            self.gyro_random_walk_std,
            self.gyro_noise_std,
            self.accel_random_walk_std,
            self.accel_noise_std,
        )
        if any(s < 0 for s in stds):
            raise ValueError("noise standard deviations must be >= 0")
        object.__setattr__(self, "gyro_bias0", np.asarray(self.gyro_bias0, dtype=float))
        object.__setattr__(self, "accel_bias0", np.asarray(self.accel_bias0, dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    """Event/gyro corruption levels.

    Pixel and angular-velocity perturbations have the given fixed magnitude
    with a uniformly random direction; timestamp jitter is zero-mean Gaussian.
    """

    pixel_magnitude: float = 0.0
    timestamp_std: float = 0.0
    omega_magnitude: float = 0.0

    def __post_init__(self):
        if min(self.pixel_magnitude, self.timestamp_std, self.omega_magnitude) < 0:
            raise ValueError("noise magnitudes must be >= 0")


def simulate_imu(motion: MotionModel, imu: ImuModel, t0: float, t1: float, seed: int = 0):
    """Sampled gyro/accel stream with bias random walk and white noise.

    Samples lie on the grid t0 + k/rate inside [t0, t1). The gyro channel is
    the true body rate plus bias plus noise; the accelerometer carries the
    gravity-free body-frame acceleration with its own bias and noise.
    """
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x1A0)))
    dt = 1.0 / imu.rate
    n = int(math.floor((t1 - t0) * imu.rate - 1e-9)) + 1
    gyro_bias = imu.gyro_bias0.astype(float).copy()
    accel_bias = imu.accel_bias0.astype(float).copy()
    samples = []
    sq = math.sqrt(dt)
    for k in range(n):
        t = t0 + k * dt
        R, _ = motion.pose(t)
        w_true = motion.omega_body(t)
        a_true = R.T @ motion.acceleration(t)
        w_meas = w_true + gyro_bias + rng.normal(0.0, 1.0, 3) * imu.gyro_noise_std
        a_meas = a_true + accel_bias + rng.normal(0.0, 1.0, 3) * imu.accel_noise_std
        samples.append(ImuSample(t, w_meas, a_meas))
        gyro_bias = gyro_bias + rng.normal(0.0, 1.0, 3) * imu.gyro_random_walk_std * sq
        accel_bias = accel_bias + rng.normal(0.0, 1.0, 3) * imu.accel_random_walk_std * sq
    return samples


def sample_trajectory(motion: MotionModel, t0: float, t1: float, rate: float = 1000.0):
    """Ground-truth pose/velocity track for the trajectory CSV."""
    n = int(math.floor((t1 - t0) * rate - 1e-9)) + 1
    out = []
    for k in range(n):
        t = t0 + k / rate
        R, p = motion.pose(t)
        out.append(TrajectorySample(t, p, rotation_to_quaternion(R), motion.velocity(t)))
    return out


def corrupt(events: list[Event], spec: NoiseSpec, seed: int = 0, labels=None):
    """Noisy copy of an event stream, re-sorted by time.

    Every event's pixel location moves by exactly ``pixel_magnitude`` in a
    uniformly random direction; timestamps receive zero-mean Gaussian jitter
    (clamped at zero). When ``labels`` is given, the permuted label array is
    returned alongside the events.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0xC0)))
    n = len(events)
    angles = rng.uniform(0.0, 2.0 * np.pi, n)
    dts = rng.normal(0.0, spec.timestamp_std, n) if spec.timestamp_std > 0 else np.zeros(n)
    t_us = np.array([e.t_us for e in events], dtype=np.int64)
    u = np.array([e.u for e in events]) + spec.pixel_magnitude * np.cos(angles)
    v = np.array([e.v for e in events]) + spec.pixel_magnitude * np.sin(angles)
    p = np.array([e.p for e in events], dtype=int)
    t_new = np.maximum(t_us + np.round(dts * US_PER_S).astype(np.int64), 0)
    # stable in the input order so zero noise is an exact identity
    order = np.lexsort((np.arange(n), t_new))
    out = [Event(int(t_new[i]), float(u[i]), float(v[i]), int(p[i])) for i in order]
    if labels is not None:
        return out, np.asarray(labels)[order]
    return out


def corrupt_gyro(samples, magnitude: float, seed: int = 0):
    """Add one fixed-magnitude, random-direction offset to a gyro stream."""
    if magnitude == 0.0:
        return list(samples)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x06A)))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    offset = magnitude * direction
    return [ImuSample(s.t, s.omega + offset, s.accel) for s in samples]


def generate_scene(count: int, bounds=((-2.0, 2.0), (-2.0, 2.0), (1.5, 3.0)), seed: int = 0) -> Wireframe:
    """Seeded wireframe with uniformly drawn segment endpoints inside bounds."""
    if count < 1:
        raise ValueError("scene needs at least one segment")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("empty scene bounds")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x5CE)))
    segments = []
    while len(segments) < count:
        p = lo + rng.uniform(size=3) * (hi - lo)
        q = lo + rng.uniform(size=3) * (hi - lo)
        if np.linalg.norm(q - p) > 1e-3:
            segments.append((p, q))
    return Wireframe(tuple(segments))


# ---------------------------------------------------------------------------
# event generation


def _clip_range(A, B):
    """Param range [s0, s1] of the camera-frame segment with z >= _Z_MIN."""
    za, zb = A[2], B[2]
    if za < _Z_MIN and zb < _Z_MIN:
        return None
    s0, s1 = 0.0, 1.0
    dz = zb - za
    if dz != 0.0:
        s_at = (_Z_MIN - za) / dz
        if za < _Z_MIN:
            s0 = max(s0, s_at)
        elif zb < _Z_MIN:
            s1 = min(s1, s_at)
    if s0 >= s1:
        return None
    return s0, s1


def _pixels_near_segment(a, b, cam: CameraModel, pad: int = 2):
    """Integer pixels within ``pad`` of the 2D segment, clipped to the canvas."""
    d = b - a
    if max(abs(d[0]), abs(d[1])) < 1e-9:
        us = np.arange(
            max(int(math.ceil(a[0] - pad)), 0), min(int(math.floor(a[0] + pad)), cam.width - 1) + 1
        )
        vs = np.arange(
            max(int(math.ceil(a[1] - pad)), 0), min(int(math.floor(a[1] + pad)), cam.height - 1) + 1
        )
        if len(us) == 0 or len(vs) == 0:
            return np.zeros((0, 2), dtype=int)
        uu, vv = np.meshgrid(us, vs)
        return np.stack([uu.ravel(), vv.ravel()], axis=1)
    major = 0 if abs(d[0]) >= abs(d[1]) else 1
    minor = 1 - major
    size_major = cam.width if major == 0 else cam.height
    size_minor = cam.height if major == 0 else cam.width
    lo = max(int(math.ceil(min(a[major], b[major]) - pad)), 0)
    hi = min(int(math.floor(max(a[major], b[major]) + pad)), size_major - 1)
    if hi < lo:
        return np.zeros((0, 2), dtype=int)
    xs = np.arange(lo, hi + 1)
    tpar = np.clip((xs - a[major]) / d[major], 0.0, 1.0)
    center = a[minor] + tpar * d[minor]
    offsets = np.arange(-pad, pad + 1)
    maj = np.repeat(xs, len(offsets))
    mnr = (np.round(center)[:, None] + offsets[None, :]).astype(int).ravel()
    ok = (mnr >= 0) & (mnr <= size_minor - 1)
    maj, mnr = maj[ok], mnr[ok]
    if major == 0:
        return np.stack([maj, mnr], axis=1)
    return np.stack([mnr, maj], axis=1)


class _SegmentProjector:
    """Camera-frame clipping + pixel projection of one segment over time."""

    def __init__(self, P, Q, motion, cam):
        self.P, self.Q, self.motion, self.cam = P, Q, motion, cam

    def endpoints_at(self, ts: np.ndarray):
        Rs, ps = self.motion.poses(ts)
        A = np.einsum("nji,nj->ni", Rs, self.P[None, :] - ps)
        B = np.einsum("nji,nj->ni", Rs, self.Q[None, :] - ps)
        return A, B

    def pixel_segment(self, ts: np.ndarray, s0: float, s1: float):
        """Projected endpoints of the [s0, s1] portion at each time."""
        A, B = self.endpoints_at(ts)
        P0 = A + s0 * (B - A)
        P1 = A + s1 * (B - A)
        return project_many(self.cam, P0), project_many(self.cam, P1)


def _signed_distances(pix, a, b):
    d = b - a
    L = np.hypot(d[0], d[1])
    n = np.array([-d[1], d[0]]) / L
    return (pix[:, 0] - a[0]) * n[0] + (pix[:, 1] - a[1]) * n[1]


def _segment_events(label, P, Q, motion, cam, t0, t1, resolution):
    proj = _SegmentProjector(P, Q, motion, cam)
    # probe pass: bound the image-plane speed to choose the coarse step
    probe_ts = np.linspace(t0, t1, 257)
    A, B = proj.endpoints_at(probe_ts)
    speeds = [1.0]
    prev = None
    for k in range(len(probe_ts)):
        rng_k = _clip_range(A[k], B[k])
        if rng_k is None:
            prev = None
            continue
        pa, pb = proj.pixel_segment(probe_ts[k : k + 1], *rng_k)
        cur = (pa[0], pb[0])
        if prev is not None:
            dt_probe = probe_ts[k] - probe_ts[k - 1]
            disp = max(np.linalg.norm(cur[0] - prev[0]), np.linalg.norm(cur[1] - prev[1]))
            speeds.append(disp / dt_probe)
        prev = cur
    vmax = max(speeds)
    dt = min(max(0.45 / (3.0 * vmax), 4.0 * resolution), (t1 - t0) / 8.0)
    n_steps = int(math.ceil((t1 - t0) / dt))
    ts = np.linspace(t0, t1, n_steps + 1)
    A, B = proj.endpoints_at(ts)
    # bisect well below the requested resolution so that rounding the
    # timestamps dominates the crossing-time error
    n_iter = max(1, int(math.ceil(math.log2(max((ts[1] - ts[0]) / (resolution / 16.0), 2.0)))))

    ev_t, ev_u, ev_v = [], [], []
    for k in range(n_steps):
        ra = _clip_range(A[k], B[k])
        rb = _clip_range(A[k + 1], B[k + 1])
        if ra is None or rb is None:
            continue
        s0, s1 = max(ra[0], rb[0]), min(ra[1], rb[1])
        if s0 >= s1:
            continue
        pair = proj.pixel_segment(ts[k : k + 2], s0, s1)
        a0, b0 = pair[0][0], pair[1][0]
        a1, b1 = pair[0][1], pair[1][1]
        if np.hypot(*(b0 - a0)) < 1e-6 or np.hypot(*(b1 - a1)) < 1e-6:
            continue
        pix = _pixels_near_segment(a0, b0, cam)
        if len(pix) == 0:
            continue
        d0 = _signed_distances(pix, a0, b0)
        d1 = _signed_distances(pix, a1, b1)
        crossing = d0 * d1 < 0.0
        if not np.any(crossing):
            continue
        pixc = pix[crossing].astype(float)
        lo = np.full(len(pixc), ts[k])
        hi = np.full(len(pixc), ts[k + 1])
        dlo = d0[crossing]
        for _ in range(n_iter):
            tm = 0.5 * (lo + hi)
            pam, pbm = proj.pixel_segment(tm, s0, s1)
            dm = (
                (pixc[:, 0] - pam[:, 0]) * -(pbm[:, 1] - pam[:, 1])
                + (pixc[:, 1] - pam[:, 1]) * (pbm[:, 0] - pam[:, 0])
            )
            lens = np.hypot(pbm[:, 0] - pam[:, 0], pbm[:, 1] - pam[:, 1])
            dm = dm / lens
            same = np.sign(dm) == np.sign(dlo)
            lo = np.where(same, tm, lo)
            dlo = np.where(same, dm, dlo)
            hi = np.where(same, hi, tm)
        t_star = 0.5 * (lo + hi)
        pam, pbm = proj.pixel_segment(t_star, s0, s1)
        seg = pbm - pam
        seg_len2 = np.einsum("ij,ij->i", seg, seg)
        upar = np.einsum("ij,ij->i", pixc - pam, seg) / seg_len2
        ok = (upar >= 0.0) & (upar <= 1.0)
        ev_t.append(t_star[ok])
        ev_u.append(pixc[ok, 0])
        ev_v.append(pixc[ok, 1])
    if not ev_t:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    return np.concatenate(ev_t), np.concatenate(ev_u), np.concatenate(ev_v)


def simulate_events(
    scene: Wireframe,
    motion: MotionModel,
    cam: CameraModel,
    t0: float,
    t1: float,
    resolution: float = 1e-6,
):
    """All pixel-center crossing events of the scene in [t0, t1].

    Returns (events, labels): a time-sorted event list with integer-microsecond
    timestamps and the per-event index of the generating segment. A static
    configuration produces no events.
    """
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    all_t, all_u, all_v, all_lab = [], [], [], []
    for si, (P, Q) in enumerate(scene.segments):
        et, eu, ev = _segment_events(si, P, Q, motion, cam, t0, t1, resolution)
        all_t.append(et)
        all_u.append(eu)
        all_v.append(ev)
        all_lab.append(np.full(len(et), si, dtype=int))
    t = np.concatenate(all_t) if all_t else np.zeros(0)
    if len(t) == 0:
        return [], np.zeros(0, dtype=int)
    u = np.concatenate(all_u)
    v = np.concatenate(all_v)
    lab = np.concatenate(all_lab)
    t_us = np.round(t * US_PER_S).astype(np.int64)
    order = np.lexsort((lab, v, u, t_us))
    events = [Event(int(t_us[i]), float(u[i]), float(v[i]), 1) for i in order]
    return events, lab[order]


# ---------------------------------------------------------------------------
# single-line test instances


@dataclass(frozen=True)
class SingleLineInstance:
    """A well-posed single-manifold problem with an exact analytic sampler.

    The instance lives in the reference frame at the window midpoint: the
    camera is at the origin at t' = 0, translates with unit-speed velocity
    ``v`` and rotates with constant body rate ``omega``. The observed line is
    a finite 3D segment.
    """

    cam: CameraModel
    v: np.ndarray
    omega: np.ndarray
    seg_a: np.ndarray
    seg_b: np.ndarray
    delta_t: float
    seed: int

    @property
    def line(self) -> PluckerLine:
        d = self.seg_b - self.seg_a
        return PluckerLine(d, np.cross(self.seg_a, d))

    def observable_velocity(self) -> np.ndarray:
        d = self.seg_b - self.seg_a
        d = d / np.linalg.norm(d)
        return self.v - d * np.dot(self.v, d)

    def gt_model(self, precondition_rotation=None):
        from .geometry import model_from_scene

        return model_from_scene(self.line, self.v, precondition_rotation)

    def _event_at(self, s: float, t: float):
        """Exact pixel event of line point at param s observed at time t'."""
        X = self.seg_a + s * (self.seg_b - self.seg_a)
        R = rotation_at(self.omega, t)  # camera-t -> reference
        Xc = R.T @ (X - self.v * t)
        if Xc[2] <= _Z_MIN:
            return None
        uv = (
            self.cam.fx * Xc[0] / Xc[2] + self.cam.cx,
            self.cam.fy * Xc[1] / Xc[2] + self.cam.cy,
        )
        if not self.cam.contains(uv[0], uv[1]):
            return None
        return uv, t

    def sample_pixel_events(self, strategy: str, n: int = 5, rng=None, max_tries: int = 4000):
        """Exact (u, v, t') tuples drawn with one of the four strategies."""
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=(self.seed, 0 if rng is None else int(rng)))
            )
        s_bins = [None] * n
        t_bins = [None] * n
        if strategy in ("spatial", "spatiotemporal"):
            s_bins = list(range(n))
        if strategy in ("temporal", "spatiotemporal"):
            t_bins = list(rng.permutation(n)) if strategy == "spatiotemporal" else list(range(n))
        if strategy not in ("random", "temporal", "spatial", "spatiotemporal"):
            raise ValueError(f"unknown sampling strategy {strategy!r}")
        uvs, ts = [], []
        for i in range(n):
            for attempt in range(max_tries):
                s = rng.uniform(0.0, 1.0)
                if s_bins[i] is not None:
                    s = (s_bins[i] + s) / n
                t = rng.uniform(-self.delta_t, self.delta_t)
                if t_bins[i] is not None:
                    t = -self.delta_t + (t_bins[i] + (t + self.delta_t) / (2 * self.delta_t)) * (
                        2 * self.delta_t / n
                    )
                hit = self._event_at(s, t)
                if hit is not None:
                    uvs.append(hit[0])
                    ts.append(hit[1])
                    break
            else:
                raise RuntimeError("could not draw a visible event (instance too marginal)")
        return np.array(uvs), np.array(ts)

    def bearing_events(self, uvs: np.ndarray, ts: np.ndarray, omega=None) -> EventSet:
        """Unrotate pixel events into an EventSet using the given gyro rate."""
        w = self.omega if omega is None else np.asarray(omega, dtype=float)
        fs = np.empty((len(ts), 3))
        for i, (uv, t) in enumerate(zip(uvs, ts)):
            f = backproject(self.cam, uv[0], uv[1])
            fs[i] = rotation_at(w, t) @ f
        order = np.argsort(ts, kind="stable")
        return EventSet(fs[order], np.asarray(ts)[order], delta_t=self.delta_t)

    def sample_events(self, strategy: str, n: int = 5, rng=None) -> EventSet:
        """Exact unrotated bearing events (no noise)."""
        uvs, ts = self.sample_pixel_events(strategy, n, rng)
        return self.bearing_events(uvs, ts)


def single_line_instance(seed: int) -> SingleLineInstance:
    """Deterministic well-posed single-line problem instance.

    Construction: two random image lines anchor the manifold at the window
    edges; random unit-magnitude velocity directions (1 m/s, 90 deg/s) fix
    the camera motion; the 3D line follows by intersecting the two viewing
    planes. Instances are redrawn until the line stays visible over a
    sufficiently long finite segment, sweeps at least a quarter of the canvas
    diagonal, and keeps an observable velocity component.
    """
    cam = CameraModel(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)
    delta_t = 0.25
    for attempt in range(200):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), attempt, 0x51)))
        v = rng.normal(size=3)
        v = v / np.linalg.norm(v)  # 1 m/s
        omega = rng.normal(size=3)
        omega = omega / np.linalg.norm(omega) * np.deg2rad(90.0)

        planes = []
        for t_edge in (-delta_t, delta_t):
            phi = rng.uniform(0.0, np.pi)
            rho = rng.uniform(-150.0, 150.0)
            direction = np.array([np.cos(phi), np.sin(phi)])
            normal2 = np.array([-np.sin(phi), np.cos(phi)])
            anchor = np.array([cam.cx, cam.cy]) + rho * normal2
            p1 = anchor - 400.0 * direction
            p2 = anchor + 400.0 * direction
            f1 = backproject(cam, p1[0], p1[1])
            f2 = backproject(cam, p2[0], p2[1])
            R = rotation_at(omega, t_edge)
            n_ref = R @ np.cross(f1, f2)
            c_ref = v * t_edge
            planes.append((n_ref, float(np.dot(n_ref, c_ref))))
        (n1, c1), (n2, c2) = planes
        d = np.cross(n1, n2)
        nd = np.linalg.norm(d)
        if nd < 1e-6:
            continue
        d = d / nd
        p0, *_ = np.linalg.lstsq(np.stack([n1, n2]), np.array([c1, c2]), rcond=None)

        # visible parameter range at both window edges
        taus = np.linspace(-30.0, 30.0, 2401)
        visible = np.ones(len(taus), dtype=bool)
        for t_edge in (-delta_t, 0.0, delta_t):
            R = rotation_at(omega, t_edge)
            Xc = (p0[None, :] + taus[:, None] * d[None, :] - v[None, :] * t_edge) @ R
            ok = Xc[:, 2] > 0.2
            uu = cam.fx * Xc[:, 0] / np.where(ok, Xc[:, 2], 1.0) + cam.cx
            vv = cam.fy * Xc[:, 1] / np.where(ok, Xc[:, 2], 1.0) + cam.cy
            visible &= ok & cam.contains(uu, vv)
        if not np.any(visible):
            continue
        runs = np.flatnonzero(np.diff(np.concatenate([[0], visible.view(np.int8), [0]])))
        spans = runs.reshape(-1, 2)
        best = spans[np.argmax(spans[:, 1] - spans[:, 0])]
        tau_lo, tau_hi = taus[best[0]], taus[best[1] - 1]
        if tau_hi - tau_lo < 0.5:
            continue
        margin = 0.05 * (tau_hi - tau_lo)
        seg_a = p0 + (tau_lo + margin) * d
        seg_b = p0 + (tau_hi - margin) * d

        # observability and canvas sweep checks
        w_obs = v - d * np.dot(v, d)
        if np.linalg.norm(w_obs) < 0.2:
            continue
        sweep = 0.0
        for s in (0.0, 0.5, 1.0):
            X = seg_a + s * (seg_b - seg_a)
            px = []
            for t_edge in (-delta_t, delta_t):
                R = rotation_at(omega, t_edge)
                Xc = R.T @ (X - v * t_edge)
                if Xc[2] <= 0:
                    break
                px.append(
                    np.array(
                        [cam.fx * Xc[0] / Xc[2] + cam.cx, cam.fy * Xc[1] / Xc[2] + cam.cy]
                    )
                )
            if len(px) == 2:
                sweep = max(sweep, float(np.linalg.norm(px[1] - px[0])))
        if sweep < 0.25 * cam.diagonal:
            continue
        return SingleLineInstance(
            cam=cam, v=v, omega=omega, seg_a=seg_a, seg_b=seg_b, delta_t=delta_t, seed=int(seed)
        )
    raise RuntimeError(f"could not build a well-posed instance for seed {seed}")
