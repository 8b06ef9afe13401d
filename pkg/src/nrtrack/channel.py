"""Radio channel: link budget, correlated shadowing, ULA beam gains, TDL-D
fading with Doppler, and received-signal synthesis.

Powers are dBm, gains/losses dB; sample amplitudes are milliwatt-normalized,
i.e. a stream with mean |x|^2 = p carries p milliwatts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import SPEED_OF_LIGHT
from .waveform import BasebandBuffer


class ChannelError(ValueError):
    """Link contract violation (e.g. non-normalized input)."""


BEAM_FLOOR_DB = -40.0

# TDL-D power delay profile: 13 taps, normalized delays scaled by the RMS
# delay spread; the first tap is Rician (dominant direct path).
TDL_D_DELAYS = np.array(
    [0.0, 0.035, 0.612, 1.363, 1.405, 1.804, 2.596, 1.775, 4.042, 7.937, 9.424, 9.708, 12.525]
)
TDL_D_POWERS_DB = np.array(
    [-0.2, -18.8, -21.0, -22.8, -17.9, -20.1, -21.9, -22.9, -27.8, -23.6, -24.8, -30.0, -27.7]
)
TDL_D_K_FACTOR_DB = 13.3
TDL_D_RMS_DELAY_SPREAD_S = 20e-9


@dataclass(frozen=True)
class LinkBudgetParams:
    """Transmit power and receiver noise constants."""

    carrier_freq: float
    tx_power_dbm: float
    bandwidth_hz: float
    noise_figure_db: float = 5.0
    noise_psd_dbm_hz: float = -174.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth_hz}")
        if self.noise_figure_db < 0:
            raise ValueError(f"noise figure must be >= 0, got {self.noise_figure_db}")


def path_loss(distance: float, carrier_freq: float) -> float:
    """Street-canyon LOS path loss (dB) below the breakpoint distance:
    32.4 + 21 log10(d_m) + 20 log10(f_GHz). Distances under 1 m clamp to 1 m.
    """
    d = max(float(distance), 1.0)
    return 32.4 + 21.0 * math.log10(d) + 20.0 * math.log10(carrier_freq / 1e9)


def received_power(
    link: LinkBudgetParams, d: float, shadow_db: float, g_tx_db: float, g_rx_db: float
) -> float:
    """Mean received power (dBm): P_T - L(d) + S + G_T + G_R."""
    return link.tx_power_dbm - path_loss(d, link.carrier_freq) + shadow_db + g_tx_db + g_rx_db


def noise_floor(link: LinkBudgetParams) -> float:
    """Receiver noise power (dBm) over the configured bandwidth."""
    return link.noise_psd_dbm_hz + 10.0 * math.log10(link.bandwidth_hz) + link.noise_figure_db


def max_doppler(speed: float, carrier_freq: float) -> float:
    """Maximum Doppler shift |v|/lambda_c in Hz."""
    if speed < 0:
        raise ValueError(f"speed must be >= 0, got {speed}")
    return speed * carrier_freq / SPEED_OF_LIGHT


# --- beamforming -------------------------------------------------------------


@dataclass(frozen=True)
class UlaConfig:
    """Uniform linear array: element count, spacing (wavelengths), boresight."""

    num_elements: int
    element_spacing: float = 0.5
    boresight: float = 0.0

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if self.element_spacing <= 0:
            raise ValueError(f"element_spacing must be > 0, got {self.element_spacing}")


def array_factor(cfg: UlaConfig, steer_angle, signal_angle) -> np.ndarray:
    """Normalized array factor magnitude (1 at signal == steer)."""
    u_sig = np.sin(np.asarray(signal_angle) - cfg.boresight)
    u_st = np.sin(np.asarray(steer_angle) - cfg.boresight)
    psi = np.pi * cfg.element_spacing * (u_sig - u_st)
    m = cfg.num_elements
    num = np.sin(m * psi)
    den = m * np.sin(psi)
    with np.errstate(invalid="ignore", divide="ignore"):
        af = np.where(np.abs(den) < 1e-30, 1.0, np.abs(num) / np.maximum(np.abs(den), 1e-300))
    return af


def beam_gain(cfg: UlaConfig, steer_angle, signal_angle, floor_db: float = BEAM_FLOOR_DB):
    """ULA beam power gain in dB: 10 log10(M |AF|^2), floored at floor_db.

    The peak is 10 log10(M) when the signal arrives exactly on the steered
    direction; the floor avoids -inf at array-factor nulls.
    """
    af = array_factor(cfg, steer_angle, signal_angle)
    with np.errstate(divide="ignore"):
        g = 10.0 * np.log10(cfg.num_elements * af**2)
    g = np.maximum(g, floor_db)
    return float(g) if np.isscalar(signal_angle) and np.isscalar(steer_angle) else g


def panel_gain(
    cfg: UlaConfig, steer_angle, signal_angle, floor_db: float = BEAM_FLOOR_DB
):
    """Beam gain of a physical panel: signals arriving from behind the panel
    (more than 90 degrees off boresight) see only the floor gain."""
    g = np.asarray(beam_gain(cfg, steer_angle, signal_angle, floor_db), dtype=float)
    off = np.abs(
        -((-(np.asarray(signal_angle) - cfg.boresight) + np.pi) % (2.0 * np.pi) - np.pi)
    )
    g = np.where(off > np.pi / 2.0, floor_db, g)
    return float(g) if g.ndim == 0 else g


# --- shadowing ---------------------------------------------------------------


class ShadowingField:
    """Zero-mean Gaussian shadowing along the track with exponential spatial
    autocorrelation exp(-dx / decorrelation_distance), one process per RRH.

    Realized as a first-order Gauss-Markov sequence on a uniform grid and
    linearly interpolated between grid points.
    """

    def __init__(
        self,
        x_min: float,
        x_max: float,
        sigma_db: float = 4.0,
        decorrelation_distance: float = 10.0,
        seed=None,
        resolution: float = 1.0,
    ):
        if x_max <= x_min:
            raise ValueError("x_max must exceed x_min")
        if decorrelation_distance <= 0 or resolution <= 0:
            raise ValueError("decorrelation distance and resolution must be > 0")
        self.sigma_db = float(sigma_db)
        self.decorrelation_distance = float(decorrelation_distance)
        self.x_min = float(x_min)
        self.resolution = float(resolution)
        n = int(math.ceil((x_max - x_min) / resolution)) + 2
        rng = np.random.default_rng(seed)
        rho = math.exp(-resolution / decorrelation_distance)
        innov = rng.standard_normal(n) * sigma_db
        values = np.empty(n)
        values[0] = innov[0]
        scale = math.sqrt(1.0 - rho * rho)
        for i in range(1, n):
            values[i] = rho * values[i - 1] + scale * innov[i]
        self.grid = values

    def sample(self, x):
        """Shadowing value(s) in dB at track position(s) x."""
        pos = (np.asarray(x, dtype=float) - self.x_min) / self.resolution
        pos = np.clip(pos, 0.0, len(self.grid) - 1.0)
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, len(self.grid) - 1)
        frac = pos - i0
        out = self.grid[i0] * (1.0 - frac) + self.grid[i1] * frac
        return float(out) if np.isscalar(x) else out


# --- fast fading -------------------------------------------------------------


@dataclass
class TdlRealization:
    """Time-varying tapped-delay-line channel realization.

    tap_gains holds one complex gain track per tap, sampled at
    gain_sample_rate (coarser than the signal rate; interpolated on use).
    Expected total tap power is 1.
    """

    tap_delays: np.ndarray
    tap_gains: np.ndarray
    gain_sample_rate: float
    k_factor_db: float
    max_doppler_hz: float

    @property
    def num_taps(self) -> int:
        return len(self.tap_delays)

    def gains_at(self, t: np.ndarray) -> np.ndarray:
        """Linearly interpolated tap gains at times t (shape: taps x len(t))."""
        n = self.tap_gains.shape[1]
        if n == 1:
            return np.repeat(self.tap_gains, len(t), axis=1)
        pos = np.clip(np.asarray(t) * self.gain_sample_rate, 0.0, n - 1.0)
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n - 1)
        frac = pos - i0
        return self.tap_gains[:, i0] * (1.0 - frac) + self.tap_gains[:, i1] * frac


def _jakes_sos(
    rng: np.random.Generator, t: np.ndarray, fd: float, num_sinusoids: int
) -> np.ndarray:
    """Sum-of-sinusoids Rayleigh process with a Jakes Doppler spectrum,
    unit mean power."""
    alpha = 2.0 * np.pi * rng.random(num_sinusoids)  # arrival angles
    phi = 2.0 * np.pi * rng.random(num_sinusoids)  # initial phases
    freqs = fd * np.cos(alpha)
    phase = 2.0 * np.pi * freqs[:, None] * t[None, :] + phi[:, None]
    return np.exp(1j * phase).sum(axis=0) / np.sqrt(num_sinusoids)


def tdl_d_taps(
    duration: float,
    sample_rate: float,
    max_doppler: float,
    seed,
    los_doppler_hz: float | None = None,
    rms_delay_spread_s: float = TDL_D_RMS_DELAY_SPREAD_S,
    k_factor_db: float = TDL_D_K_FACTOR_DB,
    num_sinusoids: int = 48,
    gain_sample_rate: float | None = None,
) -> TdlRealization:
    """Draw one TDL-D realization over `duration` seconds.

    Diffuse taps follow a Jakes spectrum at `max_doppler`; the direct
    component of tap 1 rotates deterministically at `los_doppler_hz`
    (defaults to `max_doppler`). Expected total power over realizations is 1.
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if los_doppler_hz is None:
        los_doppler_hz = max_doppler
    powers = 10.0 ** (TDL_D_POWERS_DB / 10.0)
    powers = powers / powers.sum()
    k_lin = 10.0 ** (k_factor_db / 10.0)
    if gain_sample_rate is None:
        gain_sample_rate = min(float(sample_rate), max(50e3, 32.0 * max_doppler))
    n_gain = max(2, int(math.ceil(duration * gain_sample_rate)) + 1)
    t = np.arange(n_gain) / gain_sample_rate
    rng = np.random.default_rng(seed)
    gains = np.empty((len(powers), n_gain), dtype=np.complex128)
    # Tap 1: deterministic direct phasor plus diffuse part per the K-factor.
    phi0 = 2.0 * np.pi * rng.random()
    los = np.sqrt(k_lin / (k_lin + 1.0)) * np.exp(
        1j * (2.0 * np.pi * los_doppler_hz * t + phi0)
    )
    diffuse = _jakes_sos(rng, t, max_doppler, num_sinusoids) / np.sqrt(k_lin + 1.0)
    gains[0] = np.sqrt(powers[0]) * (los + diffuse)
    for k in range(1, len(powers)):
        gains[k] = np.sqrt(powers[k]) * _jakes_sos(rng, t, max_doppler, num_sinusoids)
    return TdlRealization(
        tap_delays=TDL_D_DELAYS * rms_delay_spread_s,
        tap_gains=gains,
        gain_sample_rate=float(gain_sample_rate),
        k_factor_db=k_factor_db,
        max_doppler_hz=max_doppler,
    )


def unit_tap(sample_rate: float) -> TdlRealization:
    """Single constant unit tap (geometric-delay-only channel)."""
    return TdlRealization(
        tap_delays=np.zeros(1),
        tap_gains=np.ones((1, 1), dtype=np.complex128),
        gain_sample_rate=float(sample_rate),
        k_factor_db=float("inf"),
        max_doppler_hz=0.0,
    )


# --- signal synthesis --------------------------------------------------------


def apply_link(
    tx: BasebandBuffer,
    taps: TdlRealization,
    rx_power_dbm,
    sample_rate: float,
) -> BasebandBuffer:
    """Push a unit-power stream through the fading channel and scale it to
    the received power: out = sqrt(10^(P_R/10)) * (tx convolved with taps).

    rx_power_dbm may be a scalar or a per-sample array (time-varying gain,
    e.g. a beam-sweep envelope); tap delays round to the nearest sample.
    """
    x = tx.samples
    mean_power = float(np.mean(np.abs(x) ** 2))
    if abs(mean_power - 1.0) > 0.1:
        raise ChannelError(
            f"input must be unit average power (got {mean_power:.4f}); "
            "normalize before applying the link"
        )
    delays = np.rint(taps.tap_delays * sample_rate).astype(int)
    n_out = len(x) + int(delays.max())
    # merge taps landing on the same sample before convolving
    by_delay: dict[int, list[int]] = {}
    for idx, d in enumerate(delays):
        by_delay.setdefault(int(d), []).append(idx)
    out = np.zeros(n_out, dtype=np.complex128)
    if taps.tap_gains.shape[1] == 1:
        for d, idxs in by_delay.items():
            g = taps.tap_gains[idxs, 0].sum()
            out[d : d + len(x)] += g * x
    else:
        # taps sharing a delay are summed on the coarse gain grid first;
        # linear interpolation commutes with the sum
        n_gain = taps.tap_gains.shape[1]
        pos = np.arange(len(x)) * (taps.gain_sample_rate / sample_rate)
        pos = np.clip(pos, 0.0, n_gain - 1.0)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_gain - 1)
        frac = pos - i0
        for d, idxs in by_delay.items():
            coarse = taps.tap_gains[idxs].sum(axis=0)
            g = coarse[i0] * (1.0 - frac) + coarse[i1] * frac
            out[d : d + len(x)] += g * x
    amp = np.asarray(10.0 ** (np.asarray(rx_power_dbm, dtype=float) / 20.0))
    if amp.ndim == 0:
        out *= amp
    else:
        if len(amp) < n_out:
            amp = np.concatenate([amp, np.full(n_out - len(amp), amp[-1])])
        out *= amp[:n_out]
    return BasebandBuffer(samples=out, sample_rate=sample_rate)


def superpose_rrhs(
    per_rrh_streams: list[tuple[BasebandBuffer, int]],
    noise_power_dbm: float | None,
    seed,
    out_len: int | None = None,
    sample_rate: float | None = None,
) -> BasebandBuffer:
    """Sum per-RRH streams shifted by their integer propagation delays and add
    circularly symmetric complex Gaussian noise of the stated total power.

    noise_power_dbm=None (or -inf) disables the noise term.
    """
    if not per_rrh_streams and out_len is None:
        raise ValueError("need streams or an explicit output length")
    for _, delay in per_rrh_streams:
        if delay < 0:
            raise ValueError(f"delays must be >= 0, got {delay}")
    if out_len is None:
        out_len = max(delay + len(buf.samples) for buf, delay in per_rrh_streams)
    if sample_rate is None:
        sample_rate = per_rrh_streams[0][0].sample_rate if per_rrh_streams else 0.0
    out = np.zeros(out_len, dtype=np.complex128)
    for buf, delay in per_rrh_streams:
        n = min(len(buf.samples), out_len - delay)
        if n > 0:
            out[delay : delay + n] += buf.samples[:n]
    if noise_power_dbm is not None and noise_power_dbm != float("-inf"):
        rng = np.random.default_rng(seed)
        sigma = math.sqrt(10.0 ** (noise_power_dbm / 10.0) / 2.0)
        out += sigma * (rng.standard_normal(out_len) + 1j * rng.standard_normal(out_len))
    return BasebandBuffer(samples=out, sample_rate=sample_rate)
