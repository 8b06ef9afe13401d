"""Track geometry, train motion profile and trackside radio-head deployment.

The track is the straight line y = 0; radio heads (RRHs) sit on the upper
side at y = +offset. All angles are radians internally, measured from the
+x axis with the four-quadrant convention, so every train-to-RRH angle of
departure lies in (-pi, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0
MAX_TRAIN_SPEED = 400.0 / 3.6  # m/s, 400 km/h


class GeometryError(ValueError):
    """Degenerate geometry (coincident points)."""


class ProfileError(ValueError):
    """Invalid motion profile or out-of-range query time."""


def wrap_angle(angle):
    """Wrap angle(s) to (-pi, pi]."""
    wrapped = -((-np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi)
    return float(wrapped) if np.isscalar(angle) else wrapped


@dataclass(frozen=True)
class TrainKinematics:
    """Ground-truth train state at one instant (straight track: y terms 0)."""

    t: float
    position: tuple[float, float]
    velocity: tuple[float, float]
    acceleration: tuple[float, float]

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class TrackProfile:
    """Piecewise-constant-acceleration motion along the track.

    segments: ordered (duration_s, acceleration_m_s2) pairs.
    """

    segments: tuple[tuple[float, float], ...]
    initial_position_x: float = 0.0
    initial_velocity: float = 0.0
    max_velocity: float = MAX_TRAIN_SPEED

    def __post_init__(self):
        if not self.segments:
            raise ProfileError("profile needs at least one segment")
        v = self.initial_velocity
        for i, (dur, acc) in enumerate(self.segments):
            if dur <= 0:
                raise ProfileError(f"segment {i}: duration must be > 0, got {dur}")
            v_end = v + acc * dur
            # v is linear within a segment, so its extremes sit at endpoints
            for v_chk in (v, v_end):
                if v_chk < -1e-9:
                    raise ProfileError(f"segment {i}: velocity becomes negative ({v_chk:.3f} m/s)")
                if v_chk > self.max_velocity + 1e-9:
                    raise ProfileError(
                        f"segment {i}: velocity {v_chk:.3f} m/s exceeds maximum "
                        f"{self.max_velocity:.3f} m/s"
                    )
            v = v_end

    @property
    def total_duration(self) -> float:
        return sum(dur for dur, _ in self.segments)

    @property
    def final_position_x(self) -> float:
        return self.kinematics_at(self.total_duration).x

    def kinematics_at(self, t: float) -> TrainKinematics:
        """Exact closed-form state at time t (0 <= t <= total duration)."""
        total = self.total_duration
        if not 0.0 <= t <= total + 1e-12:
            raise ProfileError(f"t={t} outside valid interval [0, {total}]")
        x = self.initial_position_x
        v = self.initial_velocity
        remaining = t
        acc = self.segments[-1][1]
        for dur, a in self.segments:
            step = min(remaining, dur)
            if step < dur or remaining == step:
                x += v * step + 0.5 * a * step * step
                v += a * step
                acc = a
                break
            x += v * dur + 0.5 * a * dur * dur
            v += a * dur
            remaining -= dur
        return TrainKinematics(
            t=t, position=(x, 0.0), velocity=(v, 0.0), acceleration=(acc, 0.0)
        )


def kinematics_at(profile: TrackProfile, t: float) -> TrainKinematics:
    """Evaluate the motion profile at time t."""
    return profile.kinematics_at(t)


def paper_scale_profile() -> TrackProfile:
    """Accelerate-cruise-decelerate cycles peaking near 400 km/h, ~49 km long."""
    return TrackProfile(
        segments=(
            (111.0, 1.0),
            (250.0, 0.0),
            (55.0, -1.0),
            (50.0, 0.0),
            (55.0, 1.0),
            (30.0, 0.0),
        ),
        initial_position_x=0.0,
        initial_velocity=0.0,
    )


@dataclass(frozen=True)
class RRHSite:
    """One remote radio head beside the track."""

    id: int
    position: tuple[float, float]
    pss_id: int
    sss_id: int
    tx_power_dbm: float = 33.0
    panel_boresights: tuple[float, ...] = (-math.pi / 4.0, -3.0 * math.pi / 4.0)

    def __post_init__(self):
        if not 0 <= self.pss_id <= 2:
            raise ValueError(f"pss_id must be in 0..2, got {self.pss_id}")
        if not 0 <= self.sss_id <= 335:
            raise ValueError(f"sss_id must be in 0..335, got {self.sss_id}")

    @property
    def identity(self) -> tuple[int, int]:
        return (self.pss_id, self.sss_id)


@dataclass(frozen=True)
class DeploymentConfig:
    """Regular RRH deployment along the track."""

    track_length: float
    rrh_spacing: float = 500.0
    rrh_offset_y: float = 15.0
    carrier_freq: float = 30e9
    tx_power_dbm: float = 33.0

    def __post_init__(self):
        if self.rrh_spacing <= 0:
            raise ValueError(f"rrh_spacing must be > 0, got {self.rrh_spacing}")
        if self.rrh_offset_y <= 0:
            raise ValueError(f"rrh_offset_y must be > 0, got {self.rrh_offset_y}")
        if self.carrier_freq <= 0:
            raise ValueError(f"carrier_freq must be > 0, got {self.carrier_freq}")
        if self.track_length < self.rrh_spacing:
            raise ValueError(
                f"track_length {self.track_length} shorter than rrh_spacing {self.rrh_spacing}"
            )


def deploy_rrhs(cfg: DeploymentConfig) -> list[RRHSite]:
    """Place RRHs at x = k*spacing, y = +offset, cycling PSS ids so adjacent
    sites never share one; SSS ids stay distinct within any 336-site window."""
    n_sites = int(math.floor(cfg.track_length / cfg.rrh_spacing + 1e-9)) + 1
    sites = []
    for k in range(n_sites):
        sites.append(
            RRHSite(
                id=k,
                position=(k * cfg.rrh_spacing, cfg.rrh_offset_y),
                pss_id=k % 3,
                sss_id=k % 336,
                tx_power_dbm=cfg.tx_power_dbm,
            )
        )
    return sites


def los_geometry(train: tuple[float, float], site: RRHSite):
    """Line-of-sight geometry between the train and one RRH.

    Returns:
        (distance_m, aod_rad, aoa_rad): Euclidean distance, four-quadrant
        angle of (train - site) from the +x axis (in (-pi, 0) while the train
        is below the site), and angle of arrival measured off the boresight of
        the better train panel (nose +x or tail -x, fixed beams along track).
    """
    dx = train[0] - site.position[0]
    dy = train[1] - site.position[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise GeometryError(f"train coincides with RRH {site.id} at {site.position}")
    aod = math.atan2(dy, dx)
    # Arrival direction at the train; panels face +x (nose) and -x (tail).
    arrival = math.atan2(-dy, -dx)
    aoa_nose = wrap_angle(arrival)
    aoa_tail = wrap_angle(arrival - math.pi)
    aoa = aoa_nose if abs(aoa_nose) <= abs(aoa_tail) else aoa_tail
    return dist, aod, aoa


def select_serving_rrhs(
    train: tuple[float, float],
    sites: list[RRHSite],
    k: int,
    carrier_freq: float = 30e9,
    tx_gain_db: float = 0.0,
    rx_gain_db: float = 0.0,
) -> list[RRHSite]:
    """Pick the k sites with highest mean received power (zero shadowing,
    boresight-matched beam gains), strongest first; ties break on lower id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not sites:
        raise ValueError("sites must be non-empty")
    from .channel import path_loss  # local import to avoid a module cycle

    ranked = []
    for site in sites:
        dist, _, _ = los_geometry(train, site)
        power = site.tx_power_dbm - path_loss(dist, carrier_freq) + tx_gain_db + rx_gain_db
        ranked.append((-power, site.id, site))
    ranked.sort(key=lambda item: (item[0], item[1]))
    return [site for _, _, site in ranked[: min(k, len(ranked))]]
