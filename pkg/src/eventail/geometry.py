"""Core 3D line geometry, camera model, rotations, and incidence residuals.

The central objects are 3D lines observed by a moving camera. Lines are
represented either by Plucker coordinates (direction + moment) or by the
minimal two-point form: the intersections of the line with the planes
x = -1 and x = +1 of a working frame. A fitted manifold model couples such
a line with the two observable velocity coordinates in the line-dependent
basis (e1 along the line, e2 normal to the camera-line plane, e3 in-plane).

All functions are pure and operate on immutable value types; everything is
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DegenerateLineError

_ORTHO_RTOL = 1e-9


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera intrinsics (no distortion)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the canvas")

    def contains(self, u, v):
        """True where (u, v) lies on the pixel canvas."""
        return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))


@dataclass(frozen=True)
class PluckerLine:
    """3D line as direction d and moment m = P x d for any point P on it."""

    d: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _as_vec3(self.d))
        object.__setattr__(self, "m", _as_vec3(self.m))
        nd = np.linalg.norm(self.d)
        if nd == 0.0:
            raise DegenerateLineError("zero direction vector")
        nm = np.linalg.norm(self.m)
        if abs(float(np.dot(self.d, self.m))) > 1e-9 * max(nd * nm, 1e-30):
            raise DegenerateLineError("Plucker constraint d.m = 0 violated")

    def closest_point_to_origin(self) -> np.ndarray:
        return np.cross(self.d, self.m) / float(np.dot(self.d, self.d))

    def rotated(self, R: np.ndarray) -> "PluckerLine":
        """Line expressed in the frame reached by applying rotation R to coords."""
        R = np.asarray(R, dtype=float)
        return PluckerLine(R @ self.d, R @ self.m)


@dataclass(frozen=True)
class TwoPointLine:
    """Minimal line parametrization by its crossings of the planes x = -1, x = +1.

    P_a = [-1, y_a, z_a] and P_b = [1, y_b, z_b], expressed in the
    (possibly preconditioned) reference frame at the window midpoint.
    """

    y_a: float
    z_a: float
    y_b: float
    z_b: float

    def __post_init__(self):
        vals = (self.y_a, self.z_a, self.y_b, self.z_b)
        if not all(np.isfinite(vals)):
            raise ValueError("two-point line parameters must be finite")

    @property
    def p_a(self) -> np.ndarray:
        return np.array([-1.0, self.y_a, self.z_a])

    @property
    def p_b(self) -> np.ndarray:
        return np.array([1.0, self.y_b, self.z_b])

    def params(self) -> np.ndarray:
        return np.array([self.y_a, self.z_a, self.y_b, self.z_b])


@dataclass(frozen=True)
class LineFrame:
    """Orthogonal (not orthonormal) line-dependent basis.

    e1 is parallel to the line, e2 is normal to the plane spanned by the
    camera center and the line, e3 = e1 x e2 lies in that plane pointing
    away from the line.
    """

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e1", _as_vec3(self.e1))
        object.__setattr__(self, "e2", _as_vec3(self.e2))
        object.__setattr__(self, "e3", _as_vec3(self.e3))
        n1, n2, n3 = (np.linalg.norm(v) for v in (self.e1, self.e2, self.e3))
        for a, b, na, nb in (
            (self.e1, self.e2, n1, n2),
            (self.e1, self.e3, n1, n3),
            (self.e2, self.e3, n2, n3),
        ):
            if abs(float(np.dot(a, b))) > _ORTHO_RTOL * max(na * nb, 1e-30):
                raise ValueError("line frame basis is not orthogonal")

    def velocity(self, v_y: float, v_z: float) -> np.ndarray:
        """Full velocity vector e2*v_y + e3*v_z (the e1 component is zero)."""
        return self.e2 * v_y + self.e3 * v_z


@dataclass(frozen=True)
class Twist:
    """Instantaneous linear and angular camera velocity."""

    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _as_vec3(self.v))
        object.__setattr__(self, "omega", _as_vec3(self.omega))
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.omega))):
            raise ValueError("twist entries must be finite")


@dataclass(frozen=True)
class EventailModel:
    """Fitted manifold model: minimal line plus observable velocity coordinates.

    The line and the velocity coordinates live in the solver's working frame;
    ``precondition_rotation`` maps working-frame vectors back to the original
    camera frame. ``kappa`` is the unobservable velocity component along e1
    and is zero by convention.
    """

    line: TwoPointLine
    v_y: float
    v_z: float
    kappa: float = 0.0
    precondition_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        R = np.asarray(self.precondition_rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("precondition_rotation must be 3x3")
        object.__setattr__(self, "precondition_rotation", R)

    def frame(self) -> LineFrame:
        return line_frame(self.line)

    def velocity_local(self) -> np.ndarray:
        """Full velocity in the working frame."""
        return self.frame().velocity(self.v_y, self.v_z)

    def velocity_camera(self) -> np.ndarray:
        """Full velocity in the original camera frame."""
        return self.precondition_rotation @ self.velocity_local()

    def plucker_local(self) -> PluckerLine:
        return plucker_from_two_points(self.line.p_a, self.line.p_b)

    def plucker_camera(self) -> PluckerLine:
        return self.plucker_local().rotated(self.precondition_rotation)

    def params(self) -> np.ndarray:
        return np.array(
            [self.line.y_a, self.line.z_a, self.line.y_b, self.line.z_b, self.v_y, self.v_z]
        )


# ---------------------------------------------------------------------------
# camera model


def project(cam: CameraModel, point) -> tuple[float, float]:
    """Pinhole projection of a camera-frame 3D point to pixel coordinates.

    No canvas clipping is applied. Raises BehindCameraError for z <= 0.
    """
    p = _as_vec3(point)
    if p[2] <= 0:
        raise BehindCameraError(f"point has non-positive depth z={p[2]}")
    return (cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy)


def project_many(cam: CameraModel, points: np.ndarray) -> np.ndarray:
    """Vectorized pinhole projection; caller guarantees positive depths."""
    pts = np.asarray(points, dtype=float)
    z = pts[..., 2]
    return np.stack(
        [cam.fx * pts[..., 0] / z + cam.cx, cam.fy * pts[..., 1] / z + cam.cy], axis=-1
    )


def backproject(cam: CameraModel, u: float, v: float) -> np.ndarray:
    """Unit bearing vector (positive z) of a pixel; extrapolation is allowed."""
    f = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    return f / np.linalg.norm(f)


def backproject_many(cam: CameraModel, uv: np.ndarray) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    f = np.stack(
        [(uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy, np.ones(len(uv))],
        axis=1,
    )
    return f / np.linalg.norm(f, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# rotations


def skew(w) -> np.ndarray:
    w = _as_vec3(w)
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def rotation_at(omega, dt: float) -> np.ndarray:
    """Rotation exp([omega]_x * dt) via Rodrigues' formula.

    Maps points from the camera frame at t_s + dt back to the frame at t_s
    when omega is the (constant) body angular rate. A Taylor expansion is
    used below ``theta < 1e-8`` to avoid dividing by a small angle.
    """
    w = _as_vec3(omega) * float(dt)
    theta2 = float(np.dot(w, w))
    theta = np.sqrt(theta2)
    K = skew(w)
    if theta < 1e-8:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector w with exp([w]_x) = R."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    axis_raw = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * axis_raw
    if np.pi - theta < 1e-6:
        # near half turn: axis from the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
        sign = 1.0 if np.dot(axis, axis_raw) >= 0 else -1.0
        return sign * theta * axis / np.linalg.norm(axis)
    return theta * axis_raw / (2.0 * np.sin(theta))


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w) with positive scalar part."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[i] = 0.25 * s
        q[j] = (R[j, i] + R[i, j]) / s
        q[k] = (R[k, i] + R[i, k]) / s
        q[3] = (R[k, j] - R[j, k]) / s
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quaternion_to_rotation(q) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def camera_center_at(v, dt: float) -> np.ndarray:
    """Camera center v * dt in the reference frame under the constant model."""
    return _as_vec3(v) * float(dt)


# ---------------------------------------------------------------------------
# lines


def reciprocal_product(l1: PluckerLine, l2: PluckerLine) -> float:
    """<d1, m2> + <d2, m1>; vanishes iff the two lines are coplanar."""
    return float(np.dot(l1.d, l2.m) + np.dot(l2.d, l1.m))


def plucker_from_two_points(p_a, p_b) -> PluckerLine:
    """Plucker coordinates of the line through two distinct points."""
    pa, pb = _as_vec3(p_a), _as_vec3(p_b)
    d = pb - pa
    if np.linalg.norm(d) == 0.0:
        raise DegenerateLineError("the two points coincide")
    return PluckerLine(d, np.cross(pa, d))


def line_frame(line: TwoPointLine) -> LineFrame:
    """Line-dependent orthogonal basis e1 = P_b - P_a, e2 = P_b x P_a, e3 = e1 x e2.

    Raises DegenerateLineError when the line passes through the camera
    center (e2 vanishes).
    """
    pa, pb = line.p_a, line.p_b
    e1 = pb - pa
    e2 = np.cross(pb, pa)
    if np.linalg.norm(e2) < 1e-12:
        raise DegenerateLineError("line passes through the camera center")
    return LineFrame(e1, e2, np.cross(e1, e2))


def scale_line(line: TwoPointLine, k: float) -> TwoPointLine:
    """Two-point parameters of the line scaled by k about the camera center.

    The scaled line's plane crossings are recomputed so that the first
    coordinates stay at -1 and +1; e1 is unchanged while e2 and e3 scale by k.
    """
    if k == 0.0:
        raise ValueError("scale factor must be nonzero")
    mid = 0.5 * (line.p_a + line.p_b)
    half = 0.5 * (line.p_b - line.p_a)
    pa = k * mid - half
    pb = k * mid + half
    return TwoPointLine(pa[1], pa[2], pb[1], pb[2])


def two_point_from_plucker(line: PluckerLine) -> TwoPointLine:
    """Crossings of a Plucker line with the planes x = -1 and x = +1."""
    d, m = line.d, line.m
    if abs(d[0]) < 1e-12 * np.linalg.norm(d):
        raise DegenerateLineError("line is parallel to the support planes x = +-1")
    p0 = line.closest_point_to_origin()
    pa = p0 + ((-1.0 - p0[0]) / d[0]) * d
    pb = p0 + ((1.0 - p0[0]) / d[0]) * d
    return TwoPointLine(pa[1], pa[2], pb[1], pb[2])


# ---------------------------------------------------------------------------
# incidence residuals


def incidence_residual_nonminimal(line: PluckerLine, v, f_prime, t_prime: float) -> float:
    """<d, (v t') x f'> + <f', m> for an unrotated unit bearing f' at epoch t'."""
    f = _as_vec3(f_prime)
    c = camera_center_at(v, t_prime)
    return float(np.dot(line.d, np.cross(c, f)) + np.dot(f, line.m))


def _model_local_quantities(model: EventailModel):
    """(moment, velocity moment) pair of the model in its working frame.

    The incidence residual is f' . (m - t' q) with m = P_a x P_b and
    q = w x e1 where w is the full velocity.
    """
    frame = model.frame()
    w = frame.velocity(model.v_y, model.v_z)
    m = np.cross(model.line.p_a, model.line.p_b)
    q = np.cross(w, frame.e1)
    return m, q


def _to_local(model: EventailModel, f_prime: np.ndarray) -> np.ndarray:
    """Rotate camera-frame bearings into the model's working frame."""
    R = model.precondition_rotation
    return np.asarray(f_prime, dtype=float) @ R  # row-wise f @ R == R.T @ f


def incidence_residual_minimal(model: EventailModel, f_prime, t_prime: float) -> float:
    """Minimal-form incidence residual of a single unrotated bearing.

    Equals t' (P_b - P_a)^T ((R_l v_l) x f') - f'^T (P_b x P_a) with the
    bearing expressed in the model's working frame.
    """
    m, q = _model_local_quantities(model)
    f = _to_local(model, _as_vec3(f_prime))
    return float(np.dot(f, m - float(t_prime) * q))


def incidence_residuals_minimal(model: EventailModel, f_primes: np.ndarray, t_primes: np.ndarray) -> np.ndarray:
    """Vectorized minimal incidence residuals for N bearings."""
    m, q = _model_local_quantities(model)
    F = _to_local(model, np.asarray(f_primes, dtype=float))
    T = np.asarray(t_primes, dtype=float)
    return F @ m - T * (F @ q)


def angular_line_error(model: EventailModel, f_prime, t_prime: float) -> float:
    """Angle between a bearing and the instantaneous camera-center/line plane.

    The plane at epoch t' contains the camera center C[t'] and the 3D line;
    the error is |arcsin(f' . n_hat(t'))| in [0, pi/2]. Raises
    DegenerateLineError when the camera center lies on the line at t'.
    """
    m, q = _model_local_quantities(model)
    f = _to_local(model, _as_vec3(f_prime))
    n = m - float(t_prime) * q
    norm = np.linalg.norm(n)
    scale = max(np.linalg.norm(m), np.linalg.norm(q))
    if norm < 1e-12 * max(scale, 1e-30):
        raise DegenerateLineError("camera center lies on the line at this epoch")
    s = float(np.dot(f, n)) / (norm * float(np.linalg.norm(f)))
    return float(np.arcsin(min(1.0, abs(s))))


def angular_line_errors(model: EventailModel, f_primes: np.ndarray, t_primes: np.ndarray) -> np.ndarray:
    """Vectorized angular errors; degenerate epochs map to pi/2 (never inliers)."""
    m, q = _model_local_quantities(model)
    F = _to_local(model, np.asarray(f_primes, dtype=float))
    T = np.asarray(t_primes, dtype=float)
    n = m[None, :] - T[:, None] * q[None, :]
    norms = np.linalg.norm(n, axis=1)
    scale = max(np.linalg.norm(m), np.linalg.norm(q), 1e-30)
    good = norms > 1e-12 * scale
    s = np.abs(np.einsum("ij,ij->i", F, n))
    out = np.full(len(T), np.pi / 2)
    f_norms = np.linalg.norm(F, axis=1)
    out[good] = np.arcsin(np.minimum(1.0, s[good] / (norms[good] * f_norms[good])))
    return out


def dual_model(model: EventailModel) -> EventailModel:
    """The second solution of the minimal problem: line mirrored through the
    camera center (P_a' = -P_b, P_b' = -P_a) with unchanged (v_y, v_z)."""
    line = model.line
    return EventailModel(
        line=TwoPointLine(-line.y_b, -line.z_b, -line.y_a, -line.z_a),
        v_y=model.v_y,
        v_z=model.v_z,
        kappa=model.kappa,
        precondition_rotation=model.precondition_rotation,
    )


def model_from_scene(line: PluckerLine, velocity, precondition_rotation=None) -> EventailModel:
    """Ground-truth manifold model for a camera-frame line and linear velocity.

    The line is expressed in the working frame reached by
    ``precondition_rotation`` (identity by default), converted to two-point
    form, and rescaled so the observable velocity satisfies the unit-norm
    scale constraint. The velocity coordinates (v_y, v_z) are scale
    invariants, so they are unaffected by the rescaling.
    """
    R = np.eye(3) if precondition_rotation is None else np.asarray(precondition_rotation, dtype=float)
    line_w = line.rotated(R.T)
    v_w = R.T @ _as_vec3(velocity)
    two_point = two_point_from_plucker(line_w)
    frame = line_frame(two_point)
    v_y = float(np.dot(v_w, frame.e2) / np.dot(frame.e2, frame.e2))
    v_z = float(np.dot(v_w, frame.e3) / np.dot(frame.e3, frame.e3))
    w = frame.velocity(v_y, v_z)
    nw = np.linalg.norm(w)
    if nw < 1e-12:
        raise DegenerateLineError("velocity is parallel to the line (aperture case)")
    return EventailModel(
        line=scale_line(two_point, 1.0 / nw),
        v_y=v_y,
        v_z=v_z,
        precondition_rotation=R,
    )
