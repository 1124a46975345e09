"""Constant-velocity Kalman filter for a single 2-D feature.

State is ``[px, py, vx, vy]`` in pixels and pixels/second; only the
position is observed (``H = [I2 | 0]``).  The covariance update is done in
Joseph form followed by explicit symmetrization so that long sequences of
steps keep ``P`` symmetric positive semidefinite.

The arithmetic lives in small numba kernels operating on preallocated
arrays.  The public functions wrap them and return immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

#: Determinant below which the innovation covariance is treated as singular.
DET_GUARD = 1e-24
#: Condition number above which the innovation covariance is rejected.
MAX_CONDITION = 1e12

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
H.setflags(write=False)


class OutOfOrderError(ValueError):
    """Raised when asked to predict backwards in time."""


class DegenerateCovarianceError(np.linalg.LinAlgError):
    """Raised when the innovation covariance is numerically singular."""


@dataclass(frozen=True)
class ProcessModel:
    """Process-noise spectral densities of the constant-velocity model.

    ``q_pos`` (px^2/s) injects white noise directly into position;
    ``q_vel`` (px^2/s^3) is the white-acceleration density.
    """

    q_pos: float = 0.0
    q_vel: float = 25.0

    def __post_init__(self):
        if not (self.q_pos >= 0.0 and self.q_vel >= 0.0):
            raise ValueError(f"process noise densities must be >= 0, got {self}")


@dataclass(frozen=True, eq=False)
class StateEstimate:
    """Mean ``x``, covariance ``P`` and timestamp ``t`` of one track."""

    x: np.ndarray
    P: np.ndarray
    t: float

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:]

    @classmethod
    def create(cls, x, P, t: float = 0.0) -> StateEstimate:
        x = np.array(x, dtype=np.float64).reshape(4)
        P = np.array(P, dtype=np.float64).reshape(4, 4)
        return cls(x, P, float(t))


@dataclass(frozen=True, eq=False)
class Observation:
    """Absolute position measurement ``z`` with covariance ``R`` (px^2)."""

    z: np.ndarray
    R: np.ndarray

    @classmethod
    def create(cls, z, R) -> Observation:
        z = np.array(z, dtype=np.float64).reshape(2)
        R = np.array(R, dtype=np.float64)
        if R.ndim == 0:
            R = R * np.eye(2)
        return cls(z, R.reshape(2, 2))


@dataclass(frozen=True, eq=False)
class UpdateIntermediates:
    """Innovation ``y``, its covariance ``S`` and the gain ``K``."""

    y: np.ndarray
    S: np.ndarray
    K: np.ndarray


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def process_noise(dt: float, pm: ProcessModel) -> np.ndarray:
    """Discretized process noise ``Q(dt)`` (piecewise white acceleration).

    Per axis the block is::

        [[q_pos*dt + q_vel*dt^3/3, q_vel*dt^2/2],
         [q_vel*dt^2/2,            q_vel*dt    ]]
    """
    Q = np.zeros((4, 4))
    pp = pm.q_pos * dt + pm.q_vel * dt**3 / 3.0
    pv = pm.q_vel * dt**2 / 2.0
    vv = pm.q_vel * dt
    for a in range(2):
        Q[a, a] = pp
        Q[a, a + 2] = Q[a + 2, a] = pv
        Q[a + 2, a + 2] = vv
    return Q


@numba.njit(cache=True)
def _predict_kernel(x, P, dt, q_pos, q_vel, x_out, P_out):
    x_out[0] = x[0] + dt * x[2]
    x_out[1] = x[1] + dt * x[3]
    x_out[2] = x[2]
    x_out[3] = x[3]
    # F P F^T with F = [[I, dt I], [0, I]]
    T = np.empty((4, 4))
    for j in range(4):
        T[0, j] = P[0, j] + dt * P[2, j]
        T[1, j] = P[1, j] + dt * P[3, j]
        T[2, j] = P[2, j]
        T[3, j] = P[3, j]
    for i in range(4):
        P_out[i, 0] = T[i, 0] + dt * T[i, 2]
        P_out[i, 1] = T[i, 1] + dt * T[i, 3]
        P_out[i, 2] = T[i, 2]
        P_out[i, 3] = T[i, 3]
    pp = q_pos * dt + q_vel * dt * dt * dt / 3.0
    pv = q_vel * dt * dt / 2.0
    vv = q_vel * dt
    for a in range(2):
        P_out[a, a] += pp
        P_out[a, a + 2] += pv
        P_out[a + 2, a] += pv
        P_out[a + 2, a + 2] += vv
    for i in range(4):
        for j in range(i + 1, 4):
            m = 0.5 * (P_out[i, j] + P_out[j, i])
            P_out[i, j] = m
            P_out[j, i] = m


@numba.njit(cache=True)
def _update_kernel(x, P, z, R, x_out, P_out, y, S, K):
    """Joseph-form update.  Returns 0 on success, 1 if ``S`` is degenerate."""
    S[0, 0] = P[0, 0] + R[0, 0]
    S[0, 1] = P[0, 1] + R[0, 1]
    S[1, 0] = P[1, 0] + R[1, 0]
    S[1, 1] = P[1, 1] + R[1, 1]
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if not abs(det) > 1e-24:
        return 1
    half_tr = 0.5 * (S[0, 0] + S[1, 1])
    disc = half_tr * half_tr - det
    root = np.sqrt(disc) if disc > 0.0 else 0.0
    lam_max = half_tr + root
    lam_min = det / lam_max if lam_max > 0.0 else 0.0
    if not (lam_min > 0.0 and lam_max <= 1e12 * lam_min):
        return 1
    i00 = S[1, 1] / det
    i01 = -S[0, 1] / det
    i10 = -S[1, 0] / det
    i11 = S[0, 0] / det
    for i in range(4):
        K[i, 0] = P[i, 0] * i00 + P[i, 1] * i10
        K[i, 1] = P[i, 0] * i01 + P[i, 1] * i11
    y[0] = z[0] - x[0]
    y[1] = z[1] - x[1]
    for i in range(4):
        x_out[i] = x[i] + K[i, 0] * y[0] + K[i, 1] * y[1]
    # A = I - K H only differs from I in its first two columns
    A = np.eye(4)
    for i in range(4):
        A[i, 0] -= K[i, 0]
        A[i, 1] -= K[i, 1]
    T = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            s = 0.0
            for k in range(4):
                s += A[i, k] * P[k, j]
            T[i, j] = s
    KR = np.empty((4, 2))
    for i in range(4):
        KR[i, 0] = K[i, 0] * R[0, 0] + K[i, 1] * R[1, 0]
        KR[i, 1] = K[i, 0] * R[0, 1] + K[i, 1] * R[1, 1]
    for i in range(4):
        for j in range(4):
            s = 0.0
            for k in range(4):
                s += T[i, k] * A[j, k]
            P_out[i, j] = s + KR[i, 0] * K[j, 0] + KR[i, 1] * K[j, 1]
    for i in range(4):
        for j in range(i + 1, 4):
            m = 0.5 * (P_out[i, j] + P_out[j, i])
            P_out[i, j] = m
            P_out[j, i] = m
    return 0


@numba.njit(cache=True)
def _step_kernel(x, P, dt, q_pos, q_vel, z, var):
    """Predict by ``dt`` then update with ``R = var * I``; same arithmetic as the two kernels."""
    xp = np.empty(4)
    Pp = np.empty((4, 4))
    _predict_kernel(x, P, dt, q_pos, q_vel, xp, Pp)
    R = np.zeros((2, 2))
    R[0, 0] = var
    R[1, 1] = var
    x_out = np.empty(4)
    P_out = np.empty((4, 4))
    status = _update_kernel(xp, Pp, z, R, x_out, P_out, np.empty(2), np.empty((2, 2)),
                            np.empty((4, 2)))
    return status, x_out, P_out


@numba.njit(cache=True)
def _predict_update_kernel(x, P, dt, q_pos, q_vel, z, R):
    xp = np.empty(4)
    Pp = np.empty((4, 4))
    _predict_kernel(x, P, dt, q_pos, q_vel, xp, Pp)
    x_out = np.empty(4)
    P_out = np.empty((4, 4))
    y = np.empty(2)
    S = np.empty((2, 2))
    K = np.empty((4, 2))
    status = _update_kernel(xp, Pp, z, R, x_out, P_out, y, S, K)
    return status, x_out, P_out, y, S, K


@numba.njit(cache=True)
def _step_relative_kernel(x, P, dt, q_pos, q_vel, dz, back_dt, var):
    """:func:`_step_kernel` for a displacement ``dz`` measured from the
    position the track had ``back_dt`` seconds ago (constant-velocity rewind).

    Also returns the absolute measurement it used.
    """
    z = np.empty(2)
    z[0] = x[0] - x[2] * back_dt + dz[0]
    z[1] = x[1] - x[3] * back_dt + dz[1]
    status, x_out, P_out = _step_kernel(x, P, dt, q_pos, q_vel, z, var)
    return status, x_out, P_out, z


def predict(state: StateEstimate, dt: float, pm: ProcessModel) -> StateEstimate:
    """Propagate ``state`` forward by ``dt`` seconds.

    Raises:
        OutOfOrderError: if ``dt`` is negative (or NaN).
    """
    if not dt >= 0.0:
        raise OutOfOrderError(f"cannot predict backwards in time (dt={dt})")
    x = np.empty(4)
    P = np.empty((4, 4))
    _predict_kernel(state.x, state.P, float(dt), pm.q_pos, pm.q_vel, x, P)
    return StateEstimate(x, P, state.t + dt)


def update(
    state: StateEstimate, obs: Observation
) -> tuple[StateEstimate, UpdateIntermediates]:
    """Fold an absolute position observation into ``state``.

    Raises:
        DegenerateCovarianceError: if ``S = H P H^T + R`` is numerically
            singular (condition number above ``MAX_CONDITION``).
    """
    x = np.empty(4)
    P = np.empty((4, 4))
    y = np.empty(2)
    S = np.empty((2, 2))
    K = np.empty((4, 2))
    if _update_kernel(state.x, state.P, obs.z, obs.R, x, P, y, S, K):
        raise DegenerateCovarianceError(
            f"innovation covariance is singular or ill-conditioned: {S.tolist()}"
        )
    return StateEstimate(x, P, state.t), UpdateIntermediates(y, S, K)


def predict_update(
    state: StateEstimate, dt: float, pm: ProcessModel, obs: Observation
) -> tuple[StateEstimate, UpdateIntermediates]:
    """``update(predict(state, dt, pm), obs)`` in a single kernel call."""
    if not dt >= 0.0:
        raise OutOfOrderError(f"cannot predict backwards in time (dt={dt})")
    status, x, P, y, S, K = _predict_update_kernel(
        state.x, state.P, float(dt), pm.q_pos, pm.q_vel, obs.z, obs.R
    )
    if status:
        raise DegenerateCovarianceError(
            f"innovation covariance is singular or ill-conditioned: {S.tolist()}"
        )
    return StateEstimate(x, P, state.t + dt), UpdateIntermediates(y, S, K)


def covariance_defects(P: np.ndarray) -> tuple[float, float]:
    """Return ``(max |P - P^T|, smallest eigenvalue)`` for invariant checks."""
    asym = float(np.max(np.abs(P - P.T)))
    return asym, float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
