"""Extended Kalman filter tracking with a Dubins-plane motion model.

State is (x, y, z, theta, phi, v): position, heading, climb angle, and speed
magnitude. The nominal model holds heading, climb and speed constant between
frames; turn, climb-rate and acceleration effects are absorbed into the
process noise. Measurements are 3D positions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cluster import Detection3D
from .core import Timestamp

_track_id_counter = itertools.count()


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    return float(np.pi - (np.pi - a) % (2.0 * np.pi))


@dataclass
class TrackState:
    x: float
    y: float
    z: float
    theta: float  # heading, rad, (-pi, pi]
    phi: float  # climb, rad, (-pi, pi]
    v: float  # speed magnitude, m/s, >= 0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.theta, self.phi, self.v])

    @staticmethod
    def from_array(a: np.ndarray) -> "TrackState":
        a = np.asarray(a, dtype=np.float64).reshape(6)
        return TrackState(a[0], a[1], a[2], wrap_angle(a[3]), wrap_angle(a[4]), a[5])

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def _check_spd(m: np.ndarray, name: str, strict: bool) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-9):
        raise ValueError(f"{name} must be square symmetric")
    eig = np.linalg.eigvalsh(m)
    if strict and eig.min() <= 0:
        raise ValueError(f"{name} must be positive-definite")
    if not strict and eig.min() < -1e-12:
        raise ValueError(f"{name} must be positive-semidefinite")
    return m


def _default_q() -> np.ndarray:
    # Heading/climb/speed noise absorbs the turn, climb-rate and acceleration
    # terms the nominal model zeros out; sized for agile targets up to 5 m/s.
    return np.diag([1e-4, 1e-4, 1e-4, 2.0, 0.5, 4.0])


def _default_r() -> np.ndarray:
    return np.eye(3) * 0.05**2


def _default_p0() -> np.ndarray:
    return np.diag([0.1**2, 0.1**2, 0.1**2, np.pi**2, 1.0**2, 2.0**2])


@dataclass(frozen=True)
class NoiseParams:
    """Filter noise configuration. Q is a per-second rate: the predict step
    adds Q*dt. init_covariance seeds new tracks with tight position but wide
    heading/climb/speed uncertainty so a few measurements can set them."""

    Q: np.ndarray = field(default_factory=_default_q)
    R: np.ndarray = field(default_factory=_default_r)
    init_covariance: np.ndarray = field(default_factory=_default_p0)

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_spd(self.Q, "Q", strict=False))
        object.__setattr__(self, "R", _check_spd(self.R, "R", strict=True))
        object.__setattr__(self, "init_covariance", _check_spd(self.init_covariance, "init_covariance", strict=True))


@dataclass
class TrackEstimate:
    id: int
    state: TrackState
    covariance: np.ndarray
    stamp: Timestamp  # time the state refers to; advances on predict
    last_update: Timestamp  # time of the last accepted measurement
    assigned: bool = False
    missed_frames: int = 0
    covariance_resets: int = 0
    skipped_updates: int = 0


def dubins_derivative(state: TrackState) -> np.ndarray:
    """Time derivative of the state under the nominal constant-turn-free
    model: velocity resolved through heading and climb, all other components
    constant."""
    ct, st = np.cos(state.theta), np.sin(state.theta)
    cp, sp = np.cos(state.phi), np.sin(state.phi)
    return np.array([state.v * cp * ct, state.v * cp * st, state.v * sp, 0.0, 0.0, 0.0])


def state_transition(state: TrackState, dt: float) -> TrackState:
    """Classic fourth-order Runge-Kutta step of the motion model."""
    if not 0.0 < dt <= 1.0:
        raise ValueError("dt must lie in (0, 1] seconds")
    x0 = state.as_array()
    k1 = dubins_derivative(TrackState.from_array(x0))
    k2 = dubins_derivative(TrackState.from_array(x0 + 0.5 * dt * k1))
    k3 = dubins_derivative(TrackState.from_array(x0 + 0.5 * dt * k2))
    k4 = dubins_derivative(TrackState.from_array(x0 + dt * k3))
    return TrackState.from_array(x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def transition_jacobian(state: TrackState, dt: float) -> np.ndarray:
    """Analytic Jacobian of state_transition. Because the derivative depends
    only on components the nominal model holds constant, the integrated map
    is exactly x + dt*f(x) and this Jacobian is exact, not a linearization
    error away from the RK4 implementation."""
    if dt < 0 or dt > 1.0:
        raise ValueError("dt must lie in [0, 1] seconds")
    ct, st = np.cos(state.theta), np.sin(state.theta)
    cp, sp = np.cos(state.phi), np.sin(state.phi)
    v = state.v
    F = np.eye(6)
    F[0, 3] = dt * (-v * cp * st)
    F[0, 4] = dt * (-v * sp * ct)
    F[0, 5] = dt * (cp * ct)
    F[1, 3] = dt * (v * cp * ct)
    F[1, 4] = dt * (-v * sp * st)
    F[1, 5] = dt * (cp * st)
    F[2, 4] = dt * (v * cp)
    F[2, 5] = dt * sp
    return F


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


def _is_pd(P: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(P)
        return True
    except np.linalg.LinAlgError:
        return False


def ekf_predict(track: TrackEstimate, dt: float, noise: NoiseParams) -> None:
    """Propagate state and covariance by dt; covariance gets F P F^T + Q*dt
    and is re-symmetrized. A covariance that loses positive-definiteness is
    reset to an inflated diagonal and counted."""
    F = transition_jacobian(track.state, dt)
    track.state = state_transition(track.state, dt)
    P = _symmetrize(F @ track.covariance @ F.T + noise.Q * dt)
    if not _is_pd(P):
        P = np.diag(np.maximum(np.abs(np.diag(P)), 1e-6) * 10.0)
        track.covariance_resets += 1
    track.covariance = P
    track.stamp += dt


def ekf_update(track: TrackEstimate, z: np.ndarray, noise: NoiseParams) -> None:
    """Position-measurement update in Joseph form. A numerically singular
    innovation covariance skips the update and is counted. Speed is kept
    non-negative by flipping to the equivalent pose (v, theta, phi) ->
    (-v, theta+pi, -phi) when an update drives it negative."""
    z = np.asarray(z, dtype=np.float64).reshape(3)
    P = track.covariance
    S = P[:3, :3] + noise.R
    try:
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        track.skipped_updates += 1
        return
    if not np.all(np.isfinite(S_inv)) or np.linalg.cond(S) > 1e12:
        track.skipped_updates += 1
        return
    y = z - track.state.position()
    K = P[:, :3] @ S_inv
    x_new = track.state.as_array() + K @ y
    IKH = np.eye(6)
    IKH[:, :3] -= K
    P_new = _symmetrize(IKH @ P @ IKH.T + K @ noise.R @ K.T)
    if x_new[5] < 0:
        x_new[5] = -x_new[5]
        x_new[3] = x_new[3] + np.pi
        x_new[4] = -x_new[4]
    track.state = TrackState.from_array(x_new)
    track.covariance = P_new
    track.last_update = track.stamp


def spawn_track(detection: Detection3D, noise: NoiseParams, track_id: int | None = None) -> TrackEstimate:
    """New track at a detection's centroid with zero heading/climb/speed and
    the configured initial covariance. Without an explicit id, a process-wide
    monotonically increasing counter supplies one."""
    if track_id is None:
        track_id = next(_track_id_counter)
    c = detection.centroid
    return TrackEstimate(
        id=track_id,
        state=TrackState(c[0], c[1], c[2], 0.0, 0.0, 0.0),
        covariance=noise.init_covariance.copy(),
        stamp=detection.stamp,
        last_update=detection.stamp,
        assigned=True,
    )


def retire_tracks(tracks: list[TrackEstimate], max_missed_frames: int) -> list[TrackEstimate]:
    """Drop tracks that have missed strictly more than max_missed_frames
    consecutive frames; mutates the list and returns the retired tracks."""
    retired = [t for t in tracks if t.missed_frames > max_missed_frames]
    tracks[:] = [t for t in tracks if t.missed_frames <= max_missed_frames]
    return retired
