"""Fusion of per-line partial velocity observations into one unit direction.

Each fitted line constrains the camera velocity only in the plane orthogonal
to the line direction, and only up to an unknown per-line scale. Stacking the
two normalized projection rows of every line with its scale unknowns yields a
homogeneous system in (v, lambda_1..lambda_N); the direction is the smallest
eigenvector of the 3x3 Schur complement of its normal equations, and the
scales follow by back-substitution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidObservationError, UnderDeterminedError
from .geometry import EventailModel, LineFrame

EIGENGAP_FACTOR = 1e3


@dataclass(frozen=True)
class PartialObservation:
    """One line's observable velocity contribution, in the camera frame."""

    frame: LineFrame
    v_y: float
    v_z: float

    def __post_init__(self):
        if self.v_y == 0.0 and self.v_z == 0.0:
            raise InvalidObservationError("observation carries no velocity information")

    @classmethod
    def from_model(cls, model: EventailModel) -> "PartialObservation":
        """Rotate a fitted model's line frame into the original camera frame."""
        R = model.precondition_rotation
        f = model.frame()
        return cls(LineFrame(R @ f.e1, R @ f.e2, R @ f.e3), model.v_y, model.v_z)


@dataclass(frozen=True)
class VelocityEstimate:
    """Fused unit velocity direction with per-line scales and fit quality."""

    v: np.ndarray
    lambdas: np.ndarray
    smallest_eigenvalue: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "lambdas", np.asarray(self.lambdas, dtype=float))


@dataclass(frozen=True)
class StackedSystem:
    """The homogeneous system [A B][v; lambda] = 0 and its normal-form blocks."""

    A: np.ndarray  # 2N x 3
    B: np.ndarray  # 2N x N
    U: np.ndarray  # 3 x 3
    V: np.ndarray  # N x N diagonal
    W: np.ndarray  # 3 x N

    @property
    def full(self) -> np.ndarray:
        return np.hstack([self.A, self.B])

    @property
    def normal(self) -> np.ndarray:
        top = np.hstack([self.U, self.W])
        bottom = np.hstack([self.W.T, self.V])
        return np.vstack([top, bottom])


def _check_observations(obs: list[PartialObservation]) -> None:
    if len(obs) < 2:
        raise UnderDeterminedError(
            "velocity averaging needs at least two lines (one line leaves the "
            "component along its direction free)"
        )


def build_stacked_system(obs: list[PartialObservation]) -> StackedSystem:
    """Assemble A, B and the normal-equation blocks U, V, W.

    Row pair i reads |e2i|^-2 e2i^T v = lambda_i v_yi and
    |e3i|^-2 e3i^T v = lambda_i v_zi.
    """
    _check_observations(obs)
    n = len(obs)
    A = np.zeros((2 * n, 3))
    B = np.zeros((2 * n, n))
    for i, ob in enumerate(obs):
        e2, e3 = ob.frame.e2, ob.frame.e3
        A[2 * i] = e2 / np.dot(e2, e2)
        A[2 * i + 1] = e3 / np.dot(e3, e3)
        B[2 * i, i] = -ob.v_y
        B[2 * i + 1, i] = -ob.v_z
    U = A.T @ A
    v_diag = np.array([ob.v_y**2 + ob.v_z**2 for ob in obs])
    W = A.T @ B
    return StackedSystem(A=A, B=B, U=U, V=np.diag(v_diag), W=W)


def average_velocity(obs: list[PartialObservation]) -> VelocityEstimate:
    """Fused unit direction via the 3x3 Schur complement eigen-solve.

    The sign is chosen so the median recovered per-line scale is positive.
    Raises DegenerateGeometryError when the observation geometry leaves more
    than the expected one-dimensional nullspace (e.g. all lines parallel).
    """
    sys = build_stacked_system(obs)
    v_diag = np.diag(sys.V)
    # V^-1 is diagonal, inverted elementwise in linear time
    schur = sys.U - (sys.W / v_diag[None, :]) @ sys.W.T
    evals, evecs = np.linalg.eigh(schur)
    order = np.argsort(np.abs(evals))
    smallest, second = np.abs(evals[order[0]]), np.abs(evals[order[1]])
    if second < EIGENGAP_FACTOR * smallest:
        raise DegenerateGeometryError(
            "observation geometry is degenerate (no unique velocity direction)"
        )
    v = evecs[:, order[0]]
    v = v / np.linalg.norm(v)
    lambdas = -(sys.W.T @ v) / v_diag
    if np.median(lambdas) < 0:
        v, lambdas = -v, -lambdas
    return VelocityEstimate(v=v, lambdas=lambdas, smallest_eigenvalue=float(evals[order[0]]))


def average_velocity_oracle(obs: list[PartialObservation]) -> VelocityEstimate:
    """Dense verification path: smallest right singular vector of [A B]."""
    sys = build_stacked_system(obs)
    full = sys.full
    _, svals, vt = np.linalg.svd(full)
    # a wide system (N = 2) has fewer singular values than directions; the
    # missing ones are exact zeros of the spectrum
    svals = np.concatenate([svals, np.zeros(full.shape[1] - len(svals))])
    # the gap test lives on the eigenvalue scale of the normal equations,
    # i.e. on squared singular values
    if svals[-2] ** 2 < EIGENGAP_FACTOR * svals[-1] ** 2:
        raise DegenerateGeometryError(
            "observation geometry is degenerate (no unique velocity direction)"
        )
    x = vt[-1]
    v = x[:3]
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise DegenerateGeometryError("nullspace vector has no velocity component")
    lambdas = x[3:] / nv
    v = v / nv
    if np.median(lambdas) < 0:
        v, lambdas = -v, -lambdas
    residual = np.linalg.norm(full @ x)
    return VelocityEstimate(v=v, lambdas=lambdas, smallest_eigenvalue=float(residual**2))
