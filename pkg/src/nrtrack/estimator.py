"""TOA/AOD estimation from received SS bursts.

The receiver correlates the received burst window against the single-block
PSS+SSS matched filter of one RRH, slices the resulting lag profile into
per-block segments at the scheduled block start samples, detects blocks with
the peak > mean + 4*std rule, then forms the beam-weighted AOD estimate and
the combined-correlation TOA estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .geometry import RRHSite
from .waveform import (
    BasebandBuffer,
    BurstSchedule,
    Numerology,
    SSBlockLayout,
    block_reference_waveform,
)


class EstimatorError(ValueError):
    """Estimator precondition violation."""


DETECTION_SIGMA_MULTIPLIER = 4.0


@dataclass
class CorrelationProfile:
    """Nonnegative correlation magnitudes r[m] over one burst-set lag window."""

    magnitudes: np.ndarray
    sample_rate: float


@dataclass
class BlockSegment:
    """One SS block's slice of the correlation profile with its statistics."""

    block_index: int
    values: np.ndarray
    start_index: int
    sweep_angle: float
    eta: float
    mu: float
    sigma: float
    detected: bool


@dataclass
class RrhMeasurement:
    """One epoch's AOD/TOA estimate pair for one RRH."""

    rrh_id: int
    epoch_time: float
    aod_estimate: float
    toa_estimate: float
    delay_samples: int
    num_detected_blocks: int


def cross_correlate(
    received: BasebandBuffer | np.ndarray,
    reference: BasebandBuffer | np.ndarray,
    num_lags: int | None = None,
    method: str = "fft",
) -> CorrelationProfile:
    """r[m] = |sum_n conj(ref[n]) * rx[n+m]| for lags m = 0 .. num_lags-1.

    A received copy of the reference delayed by d samples peaks at m = d.
    method "fft" uses overlap-add convolution; "direct" evaluates the sum
    literally (oracle path).
    """
    z = received.samples if isinstance(received, BasebandBuffer) else np.asarray(received)
    b = reference.samples if isinstance(reference, BasebandBuffer) else np.asarray(reference)
    fs = received.sample_rate if isinstance(received, BasebandBuffer) else 0.0
    if num_lags is None:
        num_lags = len(z) - len(b) + 1
    if len(z) < len(b) + num_lags - 1:
        raise EstimatorError(
            f"received window of {len(z)} samples too short for reference "
            f"{len(b)} plus {num_lags} lags"
        )
    z = z[: len(b) + num_lags - 1]
    if method == "direct":
        mags = np.abs(np.correlate(z, b, mode="valid"))
    elif method == "fft":
        mags = np.abs(sp_signal.oaconvolve(z, np.conj(b[::-1]), mode="valid"))
    else:
        raise ValueError(f"unknown method {method!r}")
    return CorrelationProfile(magnitudes=mags, sample_rate=fs)


def segment_blocks(
    profile: CorrelationProfile,
    start_samples: np.ndarray,
    sweep_angles: np.ndarray,
) -> list[BlockSegment]:
    """Slice the profile into per-block segments of length K = min pairwise
    block spacing and apply the 4-sigma detection rule to each."""
    ups = np.asarray(start_samples, dtype=np.int64)
    if len(ups) < 2:
        raise EstimatorError("need at least two scheduled blocks to segment")
    diffs = np.abs(ups[:, None] - ups[None, :])
    k = int(diffs[diffs > 0].min()) if np.any(diffs > 0) else 0
    if k <= 0:
        raise EstimatorError("segment length K must be positive")
    if ups.max() + k > len(profile.magnitudes):
        raise EstimatorError(
            f"profile with {len(profile.magnitudes)} lags cannot cover block at "
            f"{ups.max()} with K={k}"
        )
    idx = ups[:, None] + np.arange(k)[None, :]
    seg_vals = profile.magnitudes[idx]
    etas = seg_vals.max(axis=1)
    mus = seg_vals.mean(axis=1)
    sigmas = seg_vals.std(axis=1)
    detected = etas > mus + DETECTION_SIGMA_MULTIPLIER * sigmas
    return [
        BlockSegment(
            block_index=i,
            values=seg_vals[i],
            start_index=int(ups[i]),
            sweep_angle=float(sweep_angles[i]),
            eta=float(etas[i]),
            mu=float(mus[i]),
            sigma=float(sigmas[i]),
            detected=bool(detected[i]),
        )
        for i in range(len(ups))
    ]


def estimate_aod(segments: list[BlockSegment], max_peaks: int = 3) -> float | None:
    """Weighted average of the sweep angles of the up-to-three detected blocks
    with the largest correlation peaks (weights proportional to the peaks).

    Returns None when nothing was detected (no-measurement outcome).
    """
    det = [s for s in segments if s.detected]
    if not det:
        return None
    # stable sort keeps the lower block index first on equal peaks
    det.sort(key=lambda s: (-s.eta, s.block_index))
    top = det[:max_peaks]
    weights = np.array([s.eta for s in top])
    angles = np.array([s.sweep_angle for s in top])
    return float(np.dot(weights, angles) / weights.sum())


def estimate_toa(
    segments: list[BlockSegment], sample_rate: float
) -> tuple[int, float] | None:
    """Sum the detected segments' correlation functions and take the argmax:
    returns (delay_samples, delay_samples / sample_rate), or None if nothing
    was detected. Ties resolve to the lowest lag."""
    det = [s for s in segments if s.detected]
    if not det:
        return None
    combined = np.sum([s.values for s in det], axis=0)
    delay = int(np.argmax(combined))
    return delay, delay / sample_rate


def measure_rrh(
    received: BasebandBuffer,
    rrh: RRHSite,
    sched: BurstSchedule,
    num: Numerology,
    layout: SSBlockLayout | None = None,
    reference: BasebandBuffer | None = None,
    epoch_time: float = 0.0,
) -> RrhMeasurement | None:
    """Full per-RRH estimation chain: correlate, segment, detect, estimate.

    Assumes transmitter and receiver clocks are synchronized (lag 0 equals the
    nominal burst transmit time). Returns None when no block is detected.
    """
    if reference is None:
        reference = block_reference_waveform(rrh.identity, num, layout)
    start_samples = sched.block_start_samples(num)
    k = sched.segment_length(num)
    num_lags = int(start_samples.max()) + k
    profile = cross_correlate(received, reference, num_lags=num_lags)
    segments = segment_blocks(profile, start_samples, sched.sweep_angles)
    aod = estimate_aod(segments)
    toa = estimate_toa(segments, num.sample_rate_hz)
    if aod is None or toa is None:
        return None
    delay, tau = toa
    return RrhMeasurement(
        rrh_id=rrh.id,
        epoch_time=epoch_time,
        aod_estimate=aod,
        toa_estimate=tau,
        delay_samples=delay,
        num_detected_blocks=sum(s.detected for s in segments),
    )


def segment_stats_rows(segments: list[BlockSegment], epoch: int, rrh_id: int):
    """Diagnostic rows (epoch, rrh, block, eta, mu, sigma, detected)."""
    return [
        (epoch, rrh_id, s.block_index, s.eta, s.mu, s.sigma, int(s.detected))
        for s in segments
    ]
