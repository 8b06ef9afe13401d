"""Extended Kalman filter tracking position, velocity and acceleration from
per-epoch AOD/TOA measurements.

State s = [x, y, vx, vy, ax, ay]; the motion model is the continuous
(nearly-constant) acceleration model. Measurements per RRH stack the angle of
departure (four-quadrant, radians) and the one-way propagation delay
(seconds); the mode selects which rows feed the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import SPEED_OF_LIGHT

MODES = ("aod", "toa", "both")


class TrackerError(ValueError):
    """Tracking precondition violation."""


class SingularUpdateError(TrackerError):
    """Innovation covariance could not be inverted; keep the prediction."""


@dataclass
class StateEstimate:
    """State vector with covariance after a predict or update step."""

    s: np.ndarray
    P: np.ndarray
    epoch_index: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float).reshape(6)
        self.P = np.asarray(self.P, dtype=float).reshape(6, 6)

    @property
    def position(self) -> np.ndarray:
        return self.s[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.s[2:4]

    @property
    def acceleration(self) -> np.ndarray:
        return self.s[4:6]


def build_F(dt: float) -> np.ndarray:
    """State-transition matrix [I, dt I, dt^2/2 I; 0, I, dt I; 0, 0, I]."""
    if dt <= 0:
        raise TrackerError(f"dt must be > 0, got {dt}")
    F = np.eye(6)
    for i in range(2):
        F[i, i + 2] = dt
        F[i, i + 4] = 0.5 * dt * dt
        F[i + 2, i + 4] = dt
    return F


def build_Q(dt: float, sigma_a2: float) -> np.ndarray:
    """Process-noise covariance of the continuous acceleration model."""
    if dt <= 0:
        raise TrackerError(f"dt must be > 0, got {dt}")
    if sigma_a2 < 0:
        raise TrackerError(f"sigma_a2 must be >= 0, got {sigma_a2}")
    d = dt
    blocks = np.array(
        [
            [d**5 / 20.0, d**4 / 8.0, d**3 / 6.0],
            [d**4 / 8.0, d**3 / 3.0, d**2 / 2.0],
            [d**3 / 6.0, d**2 / 2.0, d],
        ]
    )
    Q = np.zeros((6, 6))
    for bi in range(3):
        for bj in range(3):
            Q[2 * bi, 2 * bj] = blocks[bi, bj]
            Q[2 * bi + 1, 2 * bj + 1] = blocks[bi, bj]
    return sigma_a2 * Q


@dataclass
class MotionModel:
    """Discrete motion model at a fixed epoch interval."""

    dt: float = 0.1
    sigma_a2: float = 1.0
    F: np.ndarray = field(init=False)
    Q: np.ndarray = field(init=False)

    def __post_init__(self):
        self.F = build_F(self.dt)
        self.Q = build_Q(self.dt, self.sigma_a2)


@dataclass
class MeasurementSet:
    """One epoch's stacked observations: per RRH an (aod, toa) pair.

    rrh_positions: (N, 2) site coordinates; aod radians; toa seconds.
    mode picks the rows used by the filter ("aod", "toa" or "both").
    """

    rrh_positions: np.ndarray
    aod: np.ndarray
    toa: np.ndarray
    sigma_aod: float
    sigma_toa: float
    mode: str = "both"

    def __post_init__(self):
        self.rrh_positions = np.atleast_2d(np.asarray(self.rrh_positions, dtype=float))
        self.aod = np.atleast_1d(np.asarray(self.aod, dtype=float))
        self.toa = np.atleast_1d(np.asarray(self.toa, dtype=float))
        if self.mode not in MODES:
            raise TrackerError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sigma_aod <= 0 or self.sigma_toa <= 0:
            raise TrackerError("measurement noise std must be > 0")
        n = len(self.rrh_positions)
        if len(self.aod) != n or len(self.toa) != n:
            raise TrackerError("aod/toa counts must match the RRH count")

    @property
    def num_rrhs(self) -> int:
        return len(self.rrh_positions)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(y, noise variances, angle-row mask) for the selected mode."""
        rows_y, rows_var, rows_ang = [], [], []
        for i in range(self.num_rrhs):
            if self.mode in ("aod", "both"):
                rows_y.append(self.aod[i])
                rows_var.append(self.sigma_aod**2)
                rows_ang.append(True)
            if self.mode in ("toa", "both"):
                rows_y.append(self.toa[i])
                rows_var.append(self.sigma_toa**2)
                rows_ang.append(False)
        return np.array(rows_y), np.array(rows_var), np.array(rows_ang)


def measurement_fn(
    s: np.ndarray, rrh_positions: np.ndarray, mode: str = "both"
) -> np.ndarray:
    """Stacked nonlinear measurement function h(s): per RRH the four-quadrant
    angle of (train - site) and the propagation delay |p - p_k| / c."""
    s = np.asarray(s, dtype=float).reshape(-1)
    pos = np.atleast_2d(np.asarray(rrh_positions, dtype=float))
    out = []
    for xk, yk in pos:
        dx = s[0] - xk
        dy = s[1] - yk
        dist = math.hypot(dx, dy)
        if dist == 0.0:
            raise TrackerError(f"state coincides with RRH at ({xk}, {yk})")
        if mode in ("aod", "both"):
            out.append(math.atan2(dy, dx))
        if mode in ("toa", "both"):
            out.append(dist / SPEED_OF_LIGHT)
    return np.array(out)


def jacobian(s: np.ndarray, rrh_positions: np.ndarray, mode: str = "both") -> np.ndarray:
    """Jacobian of measurement_fn w.r.t. the state, evaluated at s.

    Angle row: [-dy/d^2, dx/d^2, 0, 0, 0, 0]; delay row:
    [dx/(c d), dy/(c d), 0, 0, 0, 0].
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    pos = np.atleast_2d(np.asarray(rrh_positions, dtype=float))
    rows = []
    for xk, yk in pos:
        dx = s[0] - xk
        dy = s[1] - yk
        d2 = dx * dx + dy * dy
        if d2 == 0.0:
            raise TrackerError(f"state coincides with RRH at ({xk}, {yk})")
        d = math.sqrt(d2)
        if mode in ("aod", "both"):
            rows.append([-dy / d2, dx / d2, 0.0, 0.0, 0.0, 0.0])
        if mode in ("toa", "both"):
            rows.append(
                [dx / (SPEED_OF_LIGHT * d), dy / (SPEED_OF_LIGHT * d), 0.0, 0.0, 0.0, 0.0]
            )
    return np.array(rows)


def predict(est: StateEstimate, model: MotionModel) -> StateEstimate:
    """A priori step: s <- F s, P <- F P F^T + Q."""
    s = model.F @ est.s
    P = model.F @ est.P @ model.F.T + model.Q
    return StateEstimate(s=s, P=0.5 * (P + P.T), epoch_index=est.epoch_index + 1)


def wrap_residual(x):
    """Wrap angle residual(s) to (-pi, pi]."""
    return -((-np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi)


def kalman_update_core(
    s: np.ndarray, P: np.ndarray, H: np.ndarray, W: np.ndarray, innovation: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Generic EKF update: gain, state correction, (I - K H) P covariance,
    symmetrized. Raises SingularUpdateError when S cannot be inverted."""
    S = H @ P @ H.T + W
    try:
        K = np.linalg.solve(S.T, (P @ H.T).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularUpdateError(str(exc)) from exc
    if not np.all(np.isfinite(K)):
        raise SingularUpdateError("non-finite Kalman gain")
    s_new = s + K @ innovation
    P_new = (np.eye(len(s)) - K @ H) @ P
    return s_new, 0.5 * (P_new + P_new.T)


def update(est: StateEstimate, meas: MeasurementSet) -> StateEstimate:
    """A posteriori step with angle residuals wrapped to (-pi, pi]."""
    if meas.num_rrhs < 1:
        raise TrackerError("need at least one measurement")
    y, variances, angle_rows = meas.stacked()
    h = measurement_fn(est.s, meas.rrh_positions, meas.mode)
    H = jacobian(est.s, meas.rrh_positions, meas.mode)
    innovation = y - h
    innovation[angle_rows] = wrap_residual(innovation[angle_rows])
    W = np.diag(variances)
    s_new, P_new = kalman_update_core(est.s, est.P, H, W, innovation)
    return StateEstimate(s=s_new, P=P_new, epoch_index=est.epoch_index)


def run_filter(
    epochs,
    model: MotionModel,
    init: StateEstimate,
) -> list[StateEstimate]:
    """Fold predict/update over a sequence of MeasurementSet-or-None epochs.

    Every epoch predicts; epochs with measurements also update. A singular
    update is skipped, keeping the prediction for that epoch.
    """
    states = []
    est = init
    for meas in epochs:
        est = predict(est, model)
        if meas is not None and meas.num_rrhs > 0:
            try:
                est = update(est, meas)
            except SingularUpdateError:
                pass
        states.append(est)
    return states


def initial_state(
    first_meas: MeasurementSet,
    expected_x: float = 0.0,
    p0_diag: tuple[float, ...] = (100.0**2, 1.0, 50.0**2, 1.0, 10.0**2, 1.0),
) -> StateEstimate:
    """Cold-start state: intersect the first (strongest) measurement's TOA
    circle with the track line y=0, choosing the root nearer expected_x;
    velocity and acceleration start at zero."""
    xk, yk = first_meas.rrh_positions[0]
    radius = first_meas.toa[0] * SPEED_OF_LIGHT
    half_chord = math.sqrt(max(radius * radius - yk * yk, 0.0))
    candidates = (xk - half_chord, xk + half_chord)
    x0 = min(candidates, key=lambda x: abs(x - expected_x))
    s = np.array([x0, 0.0, 0.0, 0.0, 0.0, 0.0])
    return StateEstimate(s=s, P=np.diag(p0_diag), epoch_index=-1)
