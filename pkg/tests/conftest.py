"""Shared synthetic-data builders for the test suite."""

import numpy as np
import pytest

from eventail.events_io import EventSet
from eventail.geometry import EventailModel, TwoPointLine, line_frame, scale_line


def random_two_point_line(rng, z_offset=2.0) -> TwoPointLine:
    """Random non-degenerate line kept in front of the camera."""
    y_a, z_a, y_b, z_b = rng.normal(scale=0.8, size=4)
    return TwoPointLine(y_a, z_a + z_offset, y_b, z_b + z_offset)


def random_model(rng, normalized=True, rotation=None) -> EventailModel:
    """Random manifold model, optionally rescaled to the unit-velocity gauge."""
    line = random_two_point_line(rng)
    v_y, v_z = rng.normal(size=2)
    while abs(v_y) + abs(v_z) < 0.1:
        v_y, v_z = rng.normal(size=2)
    if normalized:
        norm_w = np.linalg.norm(line_frame(line).velocity(v_y, v_z))
        line = scale_line(line, 1.0 / norm_w)
    kwargs = {}
    if rotation is not None:
        kwargs["precondition_rotation"] = rotation
    return EventailModel(line=line, v_y=float(v_y), v_z=float(v_z), **kwargs)


def exact_events(model: EventailModel, rng, n=5, t_half=0.25) -> EventSet:
    """Events exactly on the model's manifold, in the original camera frame."""
    frame = model.frame()
    w = frame.velocity(model.v_y, model.v_z)
    p_a, p_b = model.line.p_a, model.line.p_b
    R = model.precondition_rotation
    fs = np.empty((n, 3))
    ts = np.sort(rng.uniform(-t_half, t_half, n))
    for i, t in enumerate(ts):
        x = p_a + rng.uniform(-0.5, 1.5) * (p_b - p_a)
        ray = x - w * t
        fs[i] = R @ (ray / np.linalg.norm(ray))
    return EventSet(fs, ts, delta_t=t_half)


def tiny_angle(a, b) -> float:
    """Angle between two directions, stable for very small angles.

    arccos of a dot product cannot resolve angles below ~1e-8; the
    arctan2(cross, dot) form is exact down to machine precision.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b))
    return float(np.arctan2(cross, abs(np.dot(a, b))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
