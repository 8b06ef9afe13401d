"""Simulation configuration: TOML parsing, strict validation, defaults.

An empty config reproduces the full reference scenario: RRHs every 500 m at
15 m from the track, 30 GHz carrier, 33 dBm transmit power, 5 dB receiver
noise figure, 64-block burst sets measured every 100 ms, and a ~49 km
accelerate/cruise/decelerate motion profile peaking near 400 km/h.

External angle units are degrees; everything internal is radians.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, asdict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import (
    MAX_TRAIN_SPEED,
    SPEED_OF_LIGHT,
    DeploymentConfig,
    TrackProfile,
    paper_scale_profile,
)
from .channel import LinkBudgetParams, UlaConfig
from .waveform import BurstSchedule, Numerology


class ConfigError(ValueError):
    """Invalid or unknown configuration content; message names the key."""


MODES = ("aod", "toa", "both")
CHANNEL_PROFILES = ("full", "geometric")

_DEFAULT_SIGMA_AOD_DEG = 1.3 / 1.96  # 95% angle error level mapped to 1 std
_DEFAULT_SIGMA_TOA_M = 1.6 / 1.96  # 95% distance error level mapped to 1 std


@dataclass
class SimConfig:
    """Fully validated scenario description (flat, picklable)."""

    # run
    num_epochs: int = -1  # -1: derive from the motion profile duration
    epoch_interval: float = 0.1
    mode: str = "both"
    workers: int = 1
    # track
    track_segments: tuple[tuple[float, float], ...] = ()
    initial_position_x: float = 0.0
    initial_velocity: float = 0.0
    max_velocity: float = MAX_TRAIN_SPEED
    # deployment
    rrh_spacing: float = 500.0
    rrh_offset_y: float = 15.0
    track_length: float = -1.0  # -1: derive from the profile extent
    carrier_freq: float = 30e9
    tx_power_dbm: float = 33.0
    # link
    noise_figure_db: float = 5.0
    noise_psd_dbm_hz: float = -174.0
    # arrays
    rrh_elements: int = 16
    train_elements: int = 8
    element_spacing: float = 0.5
    # channel
    channel_profile: str = "full"
    shadowing_sigma_db: float = 4.0
    shadowing_decorrelation_m: float = 10.0
    num_interferers: int = 5
    k_factor_db: float = 13.3
    rms_delay_spread_ns: float = 20.0
    # estimator
    serving_count: int = 3
    # tracker
    sigma_a2: float = 1.0
    sigma_aod_deg: float = _DEFAULT_SIGMA_AOD_DEG
    sigma_toa_m: float = _DEFAULT_SIGMA_TOA_M

    def __post_init__(self):
        if not self.track_segments:
            prof = paper_scale_profile()
            self.track_segments = prof.segments
            if self.initial_position_x == 0.0:
                self.initial_position_x = prof.initial_position_x
        self.track_segments = tuple((float(d), float(a)) for d, a in self.track_segments)
        profile = self.profile()  # validates segment contents
        if self.track_length < 0:
            extent = max(profile.final_position_x, profile.initial_position_x)
            self.track_length = max(
                self.rrh_spacing,
                math.ceil(extent / self.rrh_spacing) * self.rrh_spacing,
            )
        if self.num_epochs < 0:
            self.num_epochs = int(math.floor(profile.total_duration / self.epoch_interval))
        self.validate()

    def validate(self) -> None:
        checks = [
            ("run.num_epochs", self.num_epochs >= 0),
            ("run.epoch_interval", self.epoch_interval > 0),
            ("run.mode", self.mode in MODES),
            ("run.workers", self.workers >= 1),
            ("deployment.rrh_spacing", self.rrh_spacing > 0),
            ("deployment.rrh_offset_y", self.rrh_offset_y > 0),
            ("deployment.carrier_freq_hz", self.carrier_freq > 0),
            ("deployment.track_length_m", self.track_length >= self.rrh_spacing),
            ("link.noise_figure_db", self.noise_figure_db >= 0),
            ("arrays.rrh_elements", self.rrh_elements >= 1),
            ("arrays.train_elements", self.train_elements >= 1),
            ("arrays.element_spacing", self.element_spacing > 0),
            ("channel.profile", self.channel_profile in CHANNEL_PROFILES),
            ("channel.shadowing_sigma_db", self.shadowing_sigma_db >= 0),
            ("channel.shadowing_decorrelation_m", self.shadowing_decorrelation_m > 0),
            ("channel.num_interferers", self.num_interferers >= 1),
            ("channel.rms_delay_spread_ns", self.rms_delay_spread_ns > 0),
            ("estimator.serving_count", self.serving_count >= 1),
            ("tracker.sigma_a2", self.sigma_a2 >= 0),
            ("tracker.sigma_aod_deg", self.sigma_aod_deg > 0),
            ("tracker.sigma_toa_m", self.sigma_toa_m > 0),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {key}")

    # --- derived objects ---

    def profile(self) -> TrackProfile:
        return TrackProfile(
            segments=self.track_segments,
            initial_position_x=self.initial_position_x,
            initial_velocity=self.initial_velocity,
            max_velocity=self.max_velocity,
        )

    def deployment(self) -> DeploymentConfig:
        return DeploymentConfig(
            track_length=self.track_length,
            rrh_spacing=self.rrh_spacing,
            rrh_offset_y=self.rrh_offset_y,
            carrier_freq=self.carrier_freq,
            tx_power_dbm=self.tx_power_dbm,
        )

    def numerology(self) -> Numerology:
        return Numerology()

    def schedule(self) -> BurstSchedule:
        return BurstSchedule(burst_period_s=self.epoch_interval)

    def link_budget(self, bandwidth_hz: float | None = None) -> LinkBudgetParams:
        num = self.numerology()
        return LinkBudgetParams(
            carrier_freq=self.carrier_freq,
            tx_power_dbm=self.tx_power_dbm,
            bandwidth_hz=bandwidth_hz
            if bandwidth_hz is not None
            else num.active_subcarriers * num.scs_hz,
            noise_figure_db=self.noise_figure_db,
            noise_psd_dbm_hz=self.noise_psd_dbm_hz,
        )

    def tx_array(self, boresight: float = 0.0) -> UlaConfig:
        return UlaConfig(self.rrh_elements, self.element_spacing, boresight)

    def rx_array(self, boresight: float = 0.0) -> UlaConfig:
        return UlaConfig(self.train_elements, self.element_spacing, boresight)

    @property
    def sigma_aod_rad(self) -> float:
        return math.radians(self.sigma_aod_deg)

    @property
    def sigma_toa_s(self) -> float:
        return self.sigma_toa_m / SPEED_OF_LIGHT

    def to_dict(self) -> dict:
        return asdict(self)


# Mapping of TOML (section, key) -> (SimConfig attribute, converter)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "run": {
        "num_epochs": ("num_epochs", int),
        "epoch_interval_s": ("epoch_interval", float),
        "mode": ("mode", str),
        "workers": ("workers", int),
    },
    "track": {
        "segments": ("track_segments", None),
        "initial_position_x_m": ("initial_position_x", float),
        "initial_velocity_m_s": ("initial_velocity", float),
        "max_velocity_m_s": ("max_velocity", float),
    },
    "deployment": {
        "rrh_spacing_m": ("rrh_spacing", float),
        "rrh_offset_y_m": ("rrh_offset_y", float),
        "track_length_m": ("track_length", float),
        "carrier_freq_hz": ("carrier_freq", float),
        "tx_power_dbm": ("tx_power_dbm", float),
    },
    "link": {
        "noise_figure_db": ("noise_figure_db", float),
        "noise_psd_dbm_hz": ("noise_psd_dbm_hz", float),
    },
    "arrays": {
        "rrh_elements": ("rrh_elements", int),
        "train_elements": ("train_elements", int),
        "element_spacing_wavelengths": ("element_spacing", float),
    },
    "channel": {
        "profile": ("channel_profile", str),
        "shadowing_sigma_db": ("shadowing_sigma_db", float),
        "shadowing_decorrelation_m": ("shadowing_decorrelation_m", float),
        "num_interferers": ("num_interferers", int),
        "k_factor_db": ("k_factor_db", float),
        "rms_delay_spread_ns": ("rms_delay_spread_ns", float),
    },
    "estimator": {
        "serving_count": ("serving_count", int),
    },
    "tracker": {
        "sigma_a2": ("sigma_a2", float),
        "sigma_aod_deg": ("sigma_aod_deg", float),
        "sigma_toa_m": ("sigma_toa_m", float),
    },
}


def _convert_segments(raw, path: str):
    if not isinstance(raw, list):
        raise ConfigError(f"{path} must be a list of [duration_s, accel_m_s2] pairs")
    segments = []
    for i, item in enumerate(raw):
        if not isinstance(item, list) or len(item) != 2:
            raise ConfigError(f"{path}[{i}] must be a [duration_s, accel_m_s2] pair")
        segments.append((float(item[0]), float(item[1])))
    return tuple(segments)


def parse_config(text: str) -> SimConfig:
    """Parse TOML text into a validated SimConfig; unknown keys are errors."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    kwargs = {}
    for section, content in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, raw in content.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            attr, conv = _SCHEMA[section][key]
            path = f"{section}.{key}"
            if conv is None:
                kwargs[attr] = _convert_segments(raw, path)
            else:
                try:
                    kwargs[attr] = conv(raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {path}: {raw!r}") from exc
    try:
        return SimConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> SimConfig:
    """Read and parse a TOML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
