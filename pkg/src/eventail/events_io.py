"""Event containers, time windowing, IMU-driven unrotation, and file formats.

On disk, timestamps are integer microseconds; in memory they are double
seconds. The reference epoch t_s of a window sits at the window midpoint and
events are represented relative to it by their unrotated unit bearings
f' = R[t] f and offsets t' = t - t_s.

File formats (CSV, one record per row):

* events:     header ``t_us,u,v,p`` with integer t_us >= 0, float pixels,
              polarity in {-1, 1}
* IMU:        header ``t_us,wx,wy,wz,ax,ay,az`` (rad/s, m/s^2)
* trajectory: header ``t_us,px,py,pz,qx,qy,qz,qw,vx,vy,vz`` (meters,
              unit quaternion camera-to-world, world-frame m/s)
"""

from __future__ import annotations

import csv
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import EventFileError, MissingImuError
from .geometry import CameraModel, backproject_many, rotation_at

US_PER_S = 1_000_000


@dataclass(frozen=True)
class Event:
    """Raw sensor event. Polarity is carried through but never consumed."""

    t_us: int
    u: float
    v: float
    p: int = 1

    def __post_init__(self):
        if self.t_us < 0:
            raise ValueError("event timestamp must be >= 0")
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError("event pixel coordinates must be finite")

    @property
    def t(self) -> float:
        """Timestamp in seconds."""
        return self.t_us / US_PER_S


@dataclass(frozen=True)
class BearingEvent:
    """Unrotated unit bearing with timestamp relative to the window midpoint."""

    f_prime: np.ndarray
    t_prime: float

    def __post_init__(self):
        f = np.asarray(self.f_prime, dtype=float)
        if f.shape != (3,):
            raise ValueError("bearing must be a 3-vector")
        n = np.linalg.norm(f)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("bearing must be unit norm")
        object.__setattr__(self, "f_prime", f)


@dataclass(frozen=True)
class TimeWindow:
    """Symmetric temporal slice [t_s - delta_t, t_s + delta_t] (seconds)."""

    t_s: float
    delta_t: float

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("window half-width must be positive")

    @property
    def lo(self) -> float:
        return self.t_s - self.delta_t

    @property
    def hi(self) -> float:
        return self.t_s + self.delta_t


class EventSet:
    """Time-ordered collection of bearing events with optional cluster labels.

    Stored as packed arrays: ``f_prime`` (N, 3) unit bearings, ``t_prime``
    (N,) seconds, ``labels`` (N,) integers with -1 meaning unlabeled.
    Immutable after construction.
    """

    def __init__(self, f_prime, t_prime, labels=None, delta_t=None):
        f = np.atleast_2d(np.asarray(f_prime, dtype=float))
        t = np.atleast_1d(np.asarray(t_prime, dtype=float))
        if f.shape != (len(t), 3):
            raise ValueError("bearing array must have shape (N, 3)")
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("event timestamps must be non-decreasing")
        if labels is None:
            lab = np.full(len(t), -1, dtype=int)
        else:
            lab = np.asarray(labels, dtype=int)
            if lab.shape != t.shape:
                raise ValueError("labels must match the number of events")
        self.f_prime = f
        self.t_prime = t
        self.labels = lab
        self.delta_t = None if delta_t is None else float(delta_t)
        for arr in (self.f_prime, self.t_prime, self.labels):
            arr.setflags(write=False)

    @classmethod
    def from_events(cls, events: list[BearingEvent], labels=None, delta_t=None) -> "EventSet":
        order = np.argsort([e.t_prime for e in events], kind="stable")
        f = np.array([events[i].f_prime for i in order]).reshape(-1, 3)
        t = np.array([events[i].t_prime for i in order])
        lab = None if labels is None else np.asarray(labels)[order]
        return cls(f, t, lab, delta_t)

    def __len__(self) -> int:
        return len(self.t_prime)

    def __getitem__(self, i: int) -> BearingEvent:
        return BearingEvent(self.f_prime[i], float(self.t_prime[i]))

    def select(self, indices) -> "EventSet":
        idx = np.sort(np.asarray(indices, dtype=int))
        return EventSet(self.f_prime[idx], self.t_prime[idx], self.labels[idx], self.delta_t)

    def half_width(self) -> float:
        """Window half-width; falls back to the data span when unknown."""
        if self.delta_t is not None:
            return self.delta_t
        if len(self) == 0:
            return 0.0
        return max(float(np.max(np.abs(self.t_prime))), 1e-12)


@dataclass(frozen=True)
class ImuSample:
    """One inertial measurement: gyro is consumed, accel only carried."""

    t: float
    omega: np.ndarray
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        a = np.asarray(self.accel, dtype=float)
        if w.shape != (3,) or a.shape != (3,):
            raise ValueError("omega and accel must be 3-vectors")
        if not (np.isfinite(self.t) and np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("IMU sample entries must be finite")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "accel", a)


@dataclass(frozen=True)
class TrajectorySample:
    """Ground-truth pose (camera-to-world) and world-frame velocity."""

    t: float
    position: np.ndarray
    quaternion: np.ndarray  # (x, y, z, w), camera-to-world
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "quaternion", np.asarray(self.quaternion, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


# ---------------------------------------------------------------------------
# windowing and unrotation


def window_events(stream: list[Event], window: TimeWindow) -> list[Event]:
    """Events with t in [t_s - delta_t, t_s + delta_t]; order preserved.

    The stream must already be time sorted; an empty result is not an error.
    """
    times = [e.t_us for e in stream]
    lo_us = int(np.ceil(window.lo * US_PER_S - 1e-9))
    hi_us = int(np.floor(window.hi * US_PER_S + 1e-9))
    i0 = bisect_left(times, lo_us)
    i1 = bisect_right(times, hi_us)
    return stream[i0:i1]


def downsample(events: list[Event], factor: int) -> list[Event]:
    """Keep every factor-th event (deterministic thinning)."""
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    return events[::factor]


class GyroIntegrator:
    """Piecewise-constant (zero-order hold) gyro integration.

    Produces the rotation R[t] that takes points from the camera frame at t
    back to the reference frame at t_s. Outside the sampled range the nearest
    sample is held.
    """

    def __init__(self, samples: list[ImuSample], t_s: float):
        if len(samples) == 0:
            raise MissingImuError("gyro stream is empty")
        self.t_s = float(t_s)
        self.times = np.array([s.t for s in samples])
        if np.any(np.diff(self.times) < 0):
            raise ValueError("IMU samples must be time sorted")
        self.omegas = np.array([s.omega for s in samples])
        # boundaries of the hold segments: omega[k] holds on [bounds[k], bounds[k+1])
        self.bounds = np.concatenate([[-np.inf], self.times[1:], [np.inf]])
        self._cache: dict[int, np.ndarray] = {}

    def _segment_of(self, t: float) -> int:
        return int(np.searchsorted(self.bounds, t, side="right") - 1)

    def _rotation_to_segment_start(self, k: int) -> np.ndarray:
        """R mapping frame at max(bounds[k], segment containing t_s start) chain."""
        if k in self._cache:
            return self._cache[k]
        ks = self._segment_of(self.t_s)
        R = np.eye(3)
        if k > ks:
            # forward from t_s to bounds[k]
            t_prev = self.t_s
            for j in range(ks, k):
                t_next = self.bounds[j + 1]
                R = R @ rotation_at(self.omegas[j], t_next - t_prev)
                t_prev = t_next
        elif k < ks:
            # backward from t_s to bounds[k+1]
            t_prev = self.t_s
            for j in range(ks, k, -1):
                t_next = self.bounds[j]
                R = R @ rotation_at(self.omegas[j], t_next - t_prev)
                t_prev = t_next
        self._cache[k] = R
        return R

    def rotation(self, t: float) -> np.ndarray:
        k = self._segment_of(t)
        ks = self._segment_of(self.t_s)
        if k == ks:
            return rotation_at(self.omegas[k], t - self.t_s)
        R = self._rotation_to_segment_start(k)
        anchor = self.bounds[k] if k > ks else self.bounds[k + 1]
        return R @ rotation_at(self.omegas[k], t - anchor)


def unrotate_events(
    events: list[Event],
    gyro: list[ImuSample],
    window: TimeWindow,
    cam: CameraModel,
    labels=None,
) -> EventSet:
    """Back-project and unrotate the events of one window.

    Each event becomes a bearing f' = R[t] pi^{-1}(u, v) with t' = t - t_s,
    where R[t] integrates the piecewise-constant gyro readings from the
    window midpoint t_s to the event time. Optional per-event labels are
    carried into the returned set.
    """
    if len(gyro) == 0:
        raise MissingImuError("gyro stream is empty")
    if len(events) == 0:
        return EventSet(np.zeros((0, 3)), np.zeros(0), delta_t=window.delta_t)
    integ = GyroIntegrator(gyro, window.t_s)
    uv = np.array([[e.u, e.v] for e in events])
    f = backproject_many(cam, uv)
    t = np.array([e.t for e in events])
    out = np.empty_like(f)
    for i in range(len(events)):
        out[i] = integ.rotation(t[i]) @ f[i]
    return EventSet(out, t - window.t_s, labels=labels, delta_t=window.delta_t)


# ---------------------------------------------------------------------------
# file formats


def _read_csv(path, header: list[str]):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise EventFileError("file is empty (expected a header row)", path=path)
        if [c.strip() for c in first] != header:
            raise EventFileError(
                f"bad header {first!r}, expected {','.join(header)}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise EventFileError(
                    f"expected {len(header)} fields, got {len(row)}", path=path, line=lineno
                )
            yield lineno, row


def read_events(path) -> list[Event]:
    """Parse an event CSV; raises EventFileError with the offending line."""
    events = []
    last_t = -1
    for lineno, row in _read_csv(path, ["t_us", "u", "v", "p"]):
        try:
            t_us = int(row[0])
            u, v = float(row[1]), float(row[2])
            p = int(row[3])
        except ValueError as exc:
            raise EventFileError(f"unparsable event row: {exc}", path=path, line=lineno)
        if t_us < 0:
            raise EventFileError("negative timestamp", path=path, line=lineno)
        if p not in (-1, 1):
            raise EventFileError(f"polarity must be -1 or 1, got {p}", path=path, line=lineno)
        if t_us < last_t:
            raise EventFileError("timestamps are not non-decreasing", path=path, line=lineno)
        last_t = t_us
        events.append(Event(t_us, u, v, p))
    return events


def write_events(path, events: list[Event]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t_us,u,v,p\n")
        for e in events:
            fh.write(f"{e.t_us},{e.u!r},{e.v!r},{e.p}\n")


def read_imu(path) -> list[ImuSample]:
    samples = []
    for lineno, row in _read_csv(path, ["t_us", "wx", "wy", "wz", "ax", "ay", "az"]):
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise EventFileError(f"unparsable IMU row: {exc}", path=path, line=lineno)
        samples.append(ImuSample(vals[0] / US_PER_S, np.array(vals[1:4]), np.array(vals[4:7])))
    return samples


def write_imu(path, samples: list[ImuSample]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t_us,wx,wy,wz,ax,ay,az\n")
        for s in samples:
            t_us = int(round(s.t * US_PER_S))
            vals = ",".join(repr(float(x)) for x in np.concatenate([s.omega, s.accel]))
            fh.write(f"{t_us},{vals}\n")


def read_trajectory(path) -> list[TrajectorySample]:
    header = ["t_us", "px", "py", "pz", "qx", "qy", "qz", "qw", "vx", "vy", "vz"]
    samples = []
    for lineno, row in _read_csv(path, header):
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise EventFileError(f"unparsable trajectory row: {exc}", path=path, line=lineno)
        samples.append(
            TrajectorySample(
                vals[0] / US_PER_S,
                np.array(vals[1:4]),
                np.array(vals[4:8]),
                np.array(vals[8:11]),
            )
        )
    return samples


def write_trajectory(path, samples: list[TrajectorySample]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t_us,px,py,pz,qx,qy,qz,qw,vx,vy,vz\n")
        for s in samples:
            t_us = int(round(s.t * US_PER_S))
            vals = ",".join(
                repr(float(x)) for x in np.concatenate([s.position, s.quaternion, s.velocity])
            )
            fh.write(f"{t_us},{vals}\n")


def read_labels(path) -> np.ndarray:
    """Labels CSV (`event_index,segment_index`) to a dense label array."""
    pairs = []
    for lineno, row in _read_csv(path, ["event_index", "segment_index"]):
        try:
            pairs.append((int(row[0]), int(row[1])))
        except ValueError as exc:
            raise EventFileError(f"unparsable label row: {exc}", path=path, line=lineno)
    if not pairs:
        return np.zeros(0, dtype=int)
    n = max(i for i, _ in pairs) + 1
    out = np.full(n, -1, dtype=int)
    for i, seg in pairs:
        out[i] = seg
    return out


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("event_index,segment_index\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i},{int(lab)}\n")
