import numpy as np
import pytest

from eventail.errors import EventFileError, MissingImuError
from eventail.events_io import (
    BearingEvent,
    Event,
    EventSet,
    GyroIntegrator,
    ImuSample,
    TimeWindow,
    TrajectorySample,
    downsample,
    read_events,
    read_imu,
    read_labels,
    read_trajectory,
    unrotate_events,
    window_events,
    write_events,
    write_imu,
    write_labels,
    write_trajectory,
)
from eventail.geometry import CameraModel, backproject, rotation_at

CAM = CameraModel(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)


def make_stream(rng, n=200, t_max_us=1_200_000):
    times = np.sort(rng.integers(0, t_max_us, n))
    return [
        Event(int(t), float(rng.uniform(0, 640)), float(rng.uniform(0, 480)), int(rng.choice([-1, 1])))
        for t in times
    ]


class TestWindowing:
    def test_window_covering_everything(self, rng):
        stream = make_stream(rng)
        window = TimeWindow(t_s=0.6, delta_t=0.6)
        assert window_events(stream, window) == stream

    def test_disjoint_windows_partition(self, rng):
        # four 0.3 s windows tile a 1.2 s stream; avoid exact boundary hits
        stream = [e for e in make_stream(rng, 500) if e.t_us % 300_000 != 0]
        pieces = []
        for k in range(4):
            window = TimeWindow(t_s=0.15 + 0.3 * k, delta_t=0.15)
            pieces.append(window_events(stream, window))
        assert sum(len(p) for p in pieces) == len(stream)
        flat = [e for p in pieces for e in p]
        assert flat == stream

    def test_window_past_stream_end(self, rng):
        stream = make_stream(rng)
        assert window_events(stream, TimeWindow(t_s=10.0, delta_t=0.15)) == []

    def test_downsample(self, rng):
        stream = make_stream(rng, 100)
        thinned = downsample(stream, 10)
        assert len(thinned) == 10
        assert thinned == stream[::10]
        assert downsample(stream, 1) == stream


class TestUnrotation:
    def test_zero_gyro_equals_backprojection(self, rng):
        stream = make_stream(rng, 50)
        window = TimeWindow(t_s=0.6, delta_t=0.6)
        gyro = [ImuSample(0.0, np.zeros(3))]
        out = unrotate_events(stream, gyro, window, CAM)
        for i, e in enumerate(stream):
            assert np.allclose(out.f_prime[i], backproject(CAM, e.u, e.v), atol=1e-15)
            assert abs(out.t_prime[i] - (e.t - 0.6)) < 1e-12

    def test_all_outputs_unit_norm(self, rng):
        stream = make_stream(rng, 300)
        gyro = [ImuSample(t, rng.normal(size=3)) for t in np.linspace(0, 1.2, 40)]
        out = unrotate_events(stream, gyro, TimeWindow(0.6, 0.6), CAM)
        assert np.allclose(np.linalg.norm(out.f_prime, axis=1), 1.0, atol=1e-12)

    def test_single_segment_matches_rotation_at(self, rng):
        omega = np.array([0.3, -1.0, 0.5])
        gyro = [ImuSample(0.0, omega)]
        integ = GyroIntegrator(gyro, t_s=0.6)
        for t in (0.0, 0.3, 0.6, 0.9, 1.2):
            assert np.allclose(integ.rotation(t), rotation_at(omega, t - 0.6), atol=1e-15)

    def test_piecewise_composition_forward_backward(self):
        # two constant segments around t_s; walking forward then back is exact
        gyro = [ImuSample(0.0, np.array([0.0, 0.0, 1.0])), ImuSample(0.5, np.array([1.0, 0.0, 0.0]))]
        integ = GyroIntegrator(gyro, t_s=0.25)
        R = integ.rotation(0.75)
        expected = rotation_at((0, 0, 1), 0.25) @ rotation_at((1, 0, 0), 0.25)
        assert np.allclose(R, expected, atol=1e-14)
        R_back = integ.rotation(0.0)
        assert np.allclose(R_back, rotation_at((0, 0, 1), -0.25), atol=1e-14)

    def test_spinning_camera_ground_truth_residual(self):
        # constant spin about z, translating camera, exact synthetic pixels
        from eventail.geometry import (
            incidence_residual_minimal,
            model_from_scene,
            plucker_from_two_points,
            project,
        )

        omega = np.array([0.0, 0.0, -2.0 * np.pi])
        v = np.array([0.2, 0.1, 0.4])
        pa, pb = np.array([-0.8, 0.3, 2.0]), np.array([0.9, -0.2, 2.4])
        rng = np.random.default_rng(3)
        t_s = 0.5
        events = []
        for _ in range(100):
            t_us = int(rng.integers(0, 1_000_000))
            t = t_us / 1e6
            x = pa + rng.uniform(0, 1) * (pb - pa)
            R = rotation_at(omega, t - t_s)  # camera-t -> reference
            # reference frame is the camera frame at t_s: center v*(t-t_s)
            x_cam = R.T @ (x - v * (t - t_s))
            if x_cam[2] < 0.1:
                continue
            u, vv = project(CAM, x_cam)
            events.append(Event(t_us, u, vv))
        events.sort(key=lambda e: e.t_us)
        gyro = [ImuSample(0.0, omega)]
        out = unrotate_events(events, gyro, TimeWindow(t_s, 0.5), CAM)
        model = model_from_scene(plucker_from_two_points(pa, pb), v)
        residuals = [
            incidence_residual_minimal(model, out.f_prime[i], float(out.t_prime[i]))
            for i in range(len(out))
        ]
        assert max(abs(r) for r in residuals) < 1e-9

    def test_missing_imu(self, rng):
        with pytest.raises(MissingImuError):
            unrotate_events(make_stream(rng, 5), [], TimeWindow(0.6, 0.6), CAM)


class TestEventSet:
    def test_requires_sorted_times(self):
        f = np.tile([0.0, 0.0, 1.0], (2, 1))
        with pytest.raises(ValueError):
            EventSet(f, [0.2, 0.1])

    def test_select_keeps_order_and_labels(self, rng):
        f = rng.normal(size=(10, 3))
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        t = np.sort(rng.uniform(-1, 1, 10))
        es = EventSet(f, t, labels=np.arange(10), delta_t=1.0)
        sub = es.select([7, 2, 5])
        assert list(sub.labels) == [2, 5, 7]
        assert np.all(np.diff(sub.t_prime) >= 0)
        assert sub.delta_t == 1.0

    def test_getitem(self, rng):
        f = np.array([[0.0, 0.0, 1.0]])
        es = EventSet(f, [0.5])
        ev = es[0]
        assert isinstance(ev, BearingEvent)
        assert ev.t_prime == 0.5

    def test_bearing_event_must_be_unit(self):
        with pytest.raises(ValueError):
            BearingEvent(np.array([0.0, 0.0, 2.0]), 0.0)


class TestEventFiles:
    def test_round_trip_bitwise(self, rng, tmp_path):
        events = make_stream(rng, 10_000)
        path = tmp_path / "events.csv"
        write_events(path, events)
        back = read_events(path)
        assert back == events

    def test_header_only(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("t_us,u,v,p\n")
        assert read_events(path) == []

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("t_us,u,v,p\n10,1.0,2.0,1\n20,3.0,4.0\n")
        with pytest.raises(EventFileError) as exc:
            read_events(path)
        assert exc.value.line == 3

    def test_non_monotone_rejected(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("t_us,u,v,p\n20,1.0,2.0,1\n10,3.0,4.0,-1\n")
        with pytest.raises(EventFileError):
            read_events(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("time,u,v,p\n")
        with pytest.raises(EventFileError):
            read_events(path)

    def test_bad_polarity(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("t_us,u,v,p\n10,1.0,2.0,3\n")
        with pytest.raises(EventFileError):
            read_events(path)


class TestImuTrajectoryFiles:
    def test_imu_round_trip(self, rng, tmp_path):
        samples = [
            ImuSample(k / 200.0, rng.normal(size=3), rng.normal(size=3)) for k in range(100)
        ]
        path = tmp_path / "imu.csv"
        write_imu(path, samples)
        back = read_imu(path)
        for a, b in zip(samples, back):
            assert abs(a.t - b.t) < 1e-9
            assert np.array_equal(a.omega, b.omega)
            assert np.array_equal(a.accel, b.accel)

    def test_trajectory_round_trip(self, rng, tmp_path):
        samples = []
        for k in range(50):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            samples.append(TrajectorySample(k / 100.0, rng.normal(size=3), q, rng.normal(size=3)))
        path = tmp_path / "traj.csv"
        write_trajectory(path, samples)
        back = read_trajectory(path)
        for a, b in zip(samples, back):
            assert np.array_equal(a.position, b.position)
            assert np.array_equal(a.quaternion, b.quaternion)
            assert np.array_equal(a.velocity, b.velocity)

    def test_labels_round_trip(self, tmp_path):
        labels = np.array([0, 1, 1, 0, 3])
        path = tmp_path / "labels.csv"
        write_labels(path, labels)
        assert np.array_equal(read_labels(path), labels)
