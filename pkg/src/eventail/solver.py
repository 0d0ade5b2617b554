"""Five-point minimal solver for line + partial velocity from unrotated events.

Each event constrains the manifold through the incidence relation, which is
linear in the stacked pair (m, q) where m is the line moment and
q = w x e1 is the moment of the observable velocity w about the line
direction. Five events therefore pin (m, q) up to one common scale as the
nullspace of a 5x6 matrix. Direction, line position, and velocity follow in
closed form, and the remaining scale is fixed by the unit-norm constraint on
w, whose two signed roots are exactly the known dual solution pair (mirrored
line, reversed velocity).

A multi-start damped least-squares oracle over the raw six-equation
polynomial system is provided for independent verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    DegenerateSampleError,
    InsufficientDataError,
    UnobservableVelocityError,
)
from .events_io import EventSet
from .geometry import (
    EventailModel,
    TwoPointLine,
    line_frame,
    rotation_at,
    scale_line,
)

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SolverDiagnostics:
    """Numerical health report for one minimal solve."""

    residual_max: float
    condition_estimate: float
    n_solutions: int


def _bearing_span(F: np.ndarray) -> tuple[int, int, float]:
    """Pair of bearings with maximal angular separation."""
    best = (0, 1, -1.0)
    n = len(F)
    for i in range(n - 1):
        cr = np.cross(F[i + 1 :], F[i])
        norms = np.linalg.norm(cr, axis=1)
        j = int(np.argmax(norms))
        if norms[j] > best[2]:
            best = (i, i + 1 + j, float(norms[j]))
    return best


def precondition_frame(events: EventSet) -> np.ndarray:
    """Rotation from the camera frame to the solver's working frame.

    The working frame rolls about the optical axis so that its x-axis aligns
    with the approximate image-plane direction of the line, estimated from
    the two events with extremal bearings. The support planes x = +-1 of the
    minimal parametrization then cut the line transversally.
    """
    if len(events) < 2:
        raise DegenerateSampleError("need at least two events to orient the frame")
    F = events.f_prime
    i, j, span = _bearing_span(F)
    if span < 1e-12:
        raise DegenerateSampleError("all bearings are identical")
    m_hat = np.cross(F[i], F[j])  # normal of the plane through the two bearings
    # image line direction is (-m_y, m_x); roll so it maps to the x-axis
    if np.hypot(m_hat[0], m_hat[1]) < 1e-12 * np.linalg.norm(m_hat):
        return np.eye(3)
    theta = np.arctan2(-m_hat[0], m_hat[1])
    if theta > np.pi / 2:
        theta -= np.pi
    elif theta <= -np.pi / 2:
        theta += np.pi
    c, s = np.cos(theta), np.sin(theta)
    # rotation about z by theta maps the working frame into the camera frame
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _cheirality_score(model: EventailModel, F_local: np.ndarray, T: np.ndarray) -> int:
    """Number of events whose line intersection lies in front of the camera."""
    frame = model.frame()
    d = frame.e1
    m = np.cross(model.line.p_a, model.line.p_b)
    w = frame.velocity(model.v_y, model.v_z)
    score = 0
    for f, t in zip(F_local, T):
        n = m - t * np.cross(w, d)
        fxd = np.cross(f, d)
        denom = float(np.dot(fxd, fxd))
        if denom < 1e-18:
            continue
        depth = float(np.dot(n, fxd)) / denom
        if depth > 0:
            score += 1
    return score


def solve_minimal(events: EventSet) -> tuple[list[EventailModel], SolverDiagnostics]:
    """Recover the up-to-two manifold models consistent with five events.

    Returns the solutions (cheirality-preferred first; the second is always
    the dual of the first) together with diagnostics. Degenerate samples
    yield zero solutions instead of raising.
    """
    if len(events) != 5:
        raise InsufficientDataError(f"minimal solver needs exactly 5 events, got {len(events)}")
    R_pre = precondition_frame(events)
    F = events.f_prime @ R_pre  # row-wise R_pre^T f
    T = events.t_prime

    t_scale = float(np.max(np.abs(T)))
    if t_scale == 0.0:
        return [], SolverDiagnostics(np.inf, np.inf, 0)
    Ts = T / t_scale

    M = np.hstack([F, -Ts[:, None] * F])
    _, S, Vt = np.linalg.svd(M)
    cond = np.inf if S[4] == 0.0 else float(S[0] / S[4])
    if cond > CONDITION_LIMIT:
        return [], SolverDiagnostics(np.inf, cond, 0)

    x = Vt[-1]
    m, q = x[:3], x[3:] / t_scale

    d = np.cross(m, q)
    nd = np.linalg.norm(d)
    if nd < 1e-12 * max(np.linalg.norm(m) * np.linalg.norm(q), 1e-30):
        # velocity lies in the initial camera-center/line plane
        return [], SolverDiagnostics(np.inf, cond, 0)
    if abs(d[0]) < 1e-9 * nd:
        # line parallel to the support planes; cannot be parametrized
        return [], SolverDiagnostics(np.inf, cond, 0)

    w_raw = np.cross(d, q) / float(np.dot(d, d))
    nw = np.linalg.norm(w_raw)
    if nw < 1e-15:
        return [], SolverDiagnostics(np.inf, cond, 0)

    models = []
    for s in (1.0 / nw, -1.0 / nw):
        ms = s * m
        p0 = np.cross(d, ms) / float(np.dot(d, d))
        pa = p0 + ((-1.0 - p0[0]) / d[0]) * d
        pb = p0 + ((1.0 - p0[0]) / d[0]) * d
        line = TwoPointLine(pa[1], pa[2], pb[1], pb[2])
        frame = line_frame(line)
        w = s * w_raw
        v_y = float(np.dot(w, frame.e2) / np.dot(frame.e2, frame.e2))
        v_z = float(np.dot(w, frame.e3) / np.dot(frame.e3, frame.e3))
        # tighten the unit-norm scale constraint (v_y, v_z are scale invariant)
        norm_w = np.linalg.norm(frame.velocity(v_y, v_z))
        line = scale_line(line, 1.0 / norm_w)
        models.append(EventailModel(line=line, v_y=v_y, v_z=v_z, precondition_rotation=R_pre))

    scores = [_cheirality_score(mod, F, T) for mod in models]
    if scores[1] > scores[0]:
        models = models[::-1]

    residual_max = 0.0
    for mod in models:
        frame = mod.frame()
        w = frame.velocity(mod.v_y, mod.v_z)
        mm = np.cross(mod.line.p_a, mod.line.p_b)
        qq = np.cross(w, frame.e1)
        res = np.abs(F @ mm - T * (F @ qq))
        residual_max = max(residual_max, float(np.max(res)))

    return models, SolverDiagnostics(residual_max, cond, len(models))


def recover_velocity_given_line(line: TwoPointLine, events: EventSet) -> tuple[float, float]:
    """Least-squares (v_y, v_z) from two or more events with the line fixed.

    The per-event incidence constraint is linear in the velocity
    coordinates; the solution is invariant to the line's scale. Raises
    UnobservableVelocityError when the system is rank deficient (e.g. all
    events at t' = 0).
    """
    if len(events) < 2:
        raise InsufficientDataError("need at least two events to recover the velocity")
    frame = line_frame(line)
    F = events.f_prime
    T = events.t_prime
    # t' [ (f.e3) v_y - |e1|^2 (f.e2) v_z ] = f.e2
    n1sq = float(np.dot(frame.e1, frame.e1))
    col_y = T * (F @ frame.e3)
    col_z = -n1sq * T * (F @ frame.e2)
    rhs = F @ frame.e2
    A = np.stack([col_y, col_z], axis=1)
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale < 1e-14 * max(np.max(np.abs(rhs)), 1e-30)) or np.linalg.matrix_rank(
        A, tol=1e-10 * max(float(np.max(np.abs(A))), 1e-30)
    ) < 2:
        raise UnobservableVelocityError("velocity system is rank deficient")
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return float(sol[0]), float(sol[1])


# ---------------------------------------------------------------------------
# independent verification oracle


def _system_residuals(params: np.ndarray, F: np.ndarray, T: np.ndarray) -> np.ndarray:
    """The six-equation system: five incidence residuals plus the scale.

    The incidence rows are divided by the norm of the model's (moment,
    velocity-moment) pair and the scale row is written as |w| - 1; both are
    positive rescalings that keep the zero set of the raw polynomial system
    unchanged while taming its quintic growth for the damped solver.
    """
    y_a, z_a, y_b, z_b, v_y, v_z = params
    pa = np.array([-1.0, y_a, z_a])
    pb = np.array([1.0, y_b, z_b])
    e1 = pb - pa
    e2 = np.cross(pb, pa)
    e3 = np.cross(e1, e2)
    w = e2 * v_y + e3 * v_z
    m = np.cross(pa, pb)
    q = np.cross(w, e1)
    s = np.sqrt(np.dot(m, m) + np.dot(q, q)) + 1e-12
    res = (F @ m - T * (F @ q)) / s
    return np.concatenate([res, [float(np.linalg.norm(w)) - 1.0]])


def _dual_params(x: np.ndarray) -> np.ndarray:
    return np.array([-x[2], -x[3], -x[0], -x[1], x[4], x[5]])


def _params_from_line_velocity(d, m, w) -> np.ndarray | None:
    """Two-point + velocity-coordinate parameters for a positioned line."""
    nd = np.linalg.norm(d)
    if nd == 0.0 or abs(d[0]) < 1e-10 * nd:
        return None
    p0 = np.cross(d, m) / float(np.dot(d, d))
    pa = p0 + ((-1.0 - p0[0]) / d[0]) * d
    pb = p0 + ((1.0 - p0[0]) / d[0]) * d
    e1 = pb - pa
    e2 = np.cross(pb, pa)
    e3 = np.cross(e1, e2)
    n2, n3 = float(np.dot(e2, e2)), float(np.dot(e3, e3))
    if n2 < 1e-24 or n3 < 1e-24:
        return None
    out = np.array(
        [pa[1], pa[2], pb[1], pb[2], np.dot(w, e2) / n2, np.dot(w, e3) / n3]
    )
    return out if np.all(np.isfinite(out)) else None


def _ray_pair_start(F, T, rng) -> np.ndarray | None:
    """Line through guessed depths on two event rays, velocity by 2-event fit."""
    i, j = rng.choice(len(F), size=2, replace=False)
    di, dj = np.exp(rng.normal(np.log(2.5), 0.8, size=2))
    xi, xj = di * F[i], dj * F[j]
    return _velocity_completed_start(xj - xi, np.cross(xi, xj - xi), F, T, rng)


def _plane_pair_start(F, T, rng) -> np.ndarray | None:
    """Line direction from two translation-free viewing planes, random depth."""
    perm = rng.permutation(len(F))
    d = np.cross(np.cross(F[perm[0]], F[perm[1]]), np.cross(F[perm[2]], F[perm[3]]))
    if np.linalg.norm(d) < 1e-12:
        return None
    anchor = np.exp(rng.normal(np.log(2.5), 0.7)) * F[perm[0]]
    return _velocity_completed_start(d, np.cross(anchor, d), F, T, rng)


def _velocity_completed_start(d, m, F, T, rng) -> np.ndarray | None:
    x = _params_from_line_velocity(d, m, np.zeros(3))
    if x is None:
        return None
    pa = np.array([-1.0, x[0], x[1]])
    pb = np.array([1.0, x[2], x[3]])
    e1 = pb - pa
    e2 = np.cross(pb, pa)
    e3 = np.cross(e1, e2)
    idx = rng.choice(len(F), size=2, replace=False)
    A = np.stack(
        [
            T[idx] * (F[idx] @ e3),
            -float(np.dot(e1, e1)) * T[idx] * (F[idx] @ e2),
        ],
        axis=1,
    )
    b = F[idx] @ e2
    try:
        vel, *_ = np.linalg.lstsq(A, b, rcond=None)
    except np.linalg.LinAlgError:
        vel = rng.normal(0.0, 0.5, 2)
    x[4:] = vel
    return x if np.all(np.isfinite(x)) else None


def _oracle_frames() -> list[np.ndarray]:
    """Deterministic cycle of working-frame rotations used by the oracle."""
    frames = [np.eye(3)]
    for angle in (np.pi / 4, np.pi / 2, 3 * np.pi / 4):
        frames.append(rotation_at((0.0, 0.0, 1.0), angle))
    for axis in ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0)):
        for angle in (np.pi / 3, -np.pi / 3):
            frames.append(rotation_at(axis, angle))
    frames.append(rotation_at((0.0, 1.0, 0.0), np.pi / 2))
    return frames


def oracle_solve(
    events: EventSet, n_starts: int = 200, seed: int = 0, residual_tol: float = 1e-10
) -> list[EventailModel]:
    """Multi-start damped least-squares roots of the minimal system.

    Deterministic seeded starts are drawn from three families (multi-scale
    Gaussian, depth-guessed ray pairs, translation-free viewing-plane pairs)
    and the search cycles through a fixed set of working-frame rotations so
    that badly scaled parametrizations in one frame stay benign in another.
    Converged roots are mapped back to the reference working frame, accepted
    only if the original system's residual is below ``residual_tol``, and
    each accepted root seeds one polish run at its mirrored dual. More
    deterministic batches are drawn (up to five times the requested budget)
    while fewer than two roots are known. Intended purely as a slow
    cross-check of solve_minimal.
    """
    if len(events) != 5:
        raise InsufficientDataError("oracle needs exactly 5 events")
    R_pre = precondition_frame(events)
    F = events.f_prime @ R_pre
    T = events.t_prime
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xE7E)))
    frames = _oracle_frames()
    roots: list[np.ndarray] = []

    def accept(x: np.ndarray) -> None:
        if np.linalg.norm(_system_residuals(x, F, T)) >= residual_tol:
            return
        if any(np.max(np.abs(x - r)) < 1e-6 * (1.0 + np.max(np.abs(r))) for r in roots):
            return
        roots.append(x)

    def solve_in_frame(x0: np.ndarray, Rk: np.ndarray) -> None:
        Fk = F @ Rk
        try:
            sol = least_squares(_system_residuals, x0, args=(Fk, T), method="lm", max_nfev=800)
        except Exception:
            return
        x = sol.x
        if np.linalg.norm(_system_residuals(x, Fk, T)) >= residual_tol:
            return
        if np.allclose(Rk, np.eye(3)):
            accept(x)
            return
        # map the root from the rotated frame back to the reference frame
        pa = np.array([-1.0, x[0], x[1]])
        pb = np.array([1.0, x[2], x[3]])
        e1 = pb - pa
        e2 = np.cross(pb, pa)
        e3 = np.cross(e1, e2)
        w = e2 * x[4] + e3 * x[5]
        d_ref = Rk @ e1
        m_ref = Rk @ np.cross(pa, e1)
        mapped = _params_from_line_velocity(d_ref, m_ref, Rk @ w)
        if mapped is not None:
            accept(mapped)

    done = 0
    budget = max(n_starts, 200)
    batch = 0
    while done < 5 * budget:
        Rk = frames[batch % len(frames)]
        Fk = F @ Rk
        for k in range(25):
            family = k % 3
            if family == 0:
                x0 = _plane_pair_start(Fk, T, rng)
            elif family == 1:
                x0 = _ray_pair_start(Fk, T, rng)
            else:
                x0 = rng.normal(scale=(0.5, 1.5, 4.0)[(k // 3) % 3], size=6)
            if x0 is None:
                continue
            solve_in_frame(x0, Rk)
        done += 25
        batch += 1
        for r in list(roots):
            solve_in_frame(_dual_params(r), np.eye(3))
        if len(roots) >= 2 and done >= budget:
            break
    models = [
        EventailModel(
            line=TwoPointLine(r[0], r[1], r[2], r[3]),
            v_y=float(r[4]),
            v_z=float(r[5]),
            precondition_rotation=R_pre,
        )
        for r in roots
    ]
    models.sort(key=lambda mod: tuple(mod.params()))
    return models
