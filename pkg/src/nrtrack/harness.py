"""End-to-end simulation: epoch loop (waveform -> channel -> estimator ->
tracker), error statistics and CSV export.

Every random draw comes from a substream keyed by (master_seed, epoch,
rrh_id, purpose), so runs are bit-reproducible and independent of the worker
count used for the per-epoch measurement synthesis.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import estimator as est
from . import geometry as geo
from . import tracker as trk
from . import waveform as wf
from .config import SimConfig
from .geometry import SPEED_OF_LIGHT

# RNG substream purposes
_PURPOSE_PAYLOAD = 1
_PURPOSE_FADING = 2
_PURPOSE_NOISE = 3
_PURPOSE_SHADOW = 4


def _substream(master_seed: int, epoch: int, rrh_id: int, purpose: int):
    return np.random.SeedSequence((int(master_seed), int(epoch), int(rrh_id), int(purpose)))


@dataclass
class MeasurementRecord:
    """One successful per-RRH measurement with its ground truth."""

    epoch: int
    t: float
    rrh_id: int
    rrh_x: float
    rrh_y: float
    aod_est: float  # radians
    toa_est: float  # seconds
    delay_samples: int
    num_detected_blocks: int
    aod_true: float  # radians
    toa_true: float  # seconds
    distance_true: float  # meters

    @property
    def angle_error_deg(self) -> float:
        return abs(math.degrees(geo.wrap_angle(self.aod_est - self.aod_true)))

    @property
    def distance_error_m(self) -> float:
        return abs(SPEED_OF_LIGHT * self.toa_est - self.distance_true)


@dataclass
class EpochRecord:
    """Truth, measurements and tracker output for one 100 ms epoch."""

    epoch: int
    t: float
    truth: geo.TrainKinematics
    measurements: list[MeasurementRecord]
    state: np.ndarray
    position_error: float


@dataclass
class MetricsSummary:
    """Aggregate error statistics over one run."""

    num_epochs: int
    num_measurements: int
    mean_error: float
    error_percentiles: dict[int, float]
    submeter_availability: float
    angle_error_percentiles: dict[int, float]  # degrees
    distance_error_percentiles: dict[int, float]  # meters


PERCENTILE_LEVELS = (50, 75, 90, 95, 99)


def nearest_rank(values, level: int) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    vals = np.sort(np.asarray(values, dtype=float))
    if len(vals) == 0:
        return float("nan")
    rank = max(1, math.ceil(level / 100.0 * len(vals)))
    return float(vals[rank - 1])


# --- per-epoch synthesis ------------------------------------------------------


class SimContext:
    """Deployment, schedules and per-identity caches shared across epochs."""

    def __init__(self, cfg: SimConfig, master_seed: int):
        self.cfg = cfg
        self.master_seed = int(master_seed)
        self.num = cfg.numerology()
        self.sched = cfg.schedule()
        self.layout = wf.SSBlockLayout()
        self.sites = geo.deploy_rrhs(cfg.deployment())
        self.fs = self.num.sample_rate_hz
        self.block_starts = self.sched.block_start_samples(self.num)
        self.k_seg = self.sched.segment_length(self.num)
        self.burst_symbols = self.sched.num_symbols(self.num)
        self.burst_samples = self.sched.burst_samples(self.num)
        self.block_refs = {}
        for site in self.sites:
            if site.identity not in self.block_refs:
                self.block_refs[site.identity] = wf.block_reference_waveform(
                    site.identity, self.num, self.layout
                )
        ref_len = len(next(iter(self.block_refs.values())).samples)
        self.rx_len = int(self.block_starts.max()) + self.k_seg + ref_len
        # noise over the full sampling bandwidth; the in-band share matches
        # the receiver noise floor over the occupied 144 MHz
        self.noise_dbm = (
            cfg.noise_psd_dbm_hz + 10.0 * math.log10(self.fs) + cfg.noise_figure_db
        )
        # the train listens with two fixed along-track panels (nose +x, tail -x);
        # each RRH is measured on the panel stream with the better gain toward it
        self.rx_panels = {0.0: cfg.rx_array(0.0), math.pi: cfg.rx_array(math.pi)}
        self.tx_arrays = {
            b: cfg.tx_array(boresight=b) for b in self.sites[0].panel_boresights
        }
        # blocks are carried by the panel whose boresight is nearest the beam
        angles = self.sched.sweep_angles
        boresights = np.array(sorted(self.tx_arrays.keys(), reverse=True))
        self.block_panels = np.array(
            [boresights[np.argmin(np.abs(a - boresights))] for a in angles]
        )
        self.shadow_fields = {}
        if cfg.channel_profile == "full" and cfg.shadowing_sigma_db > 0:
            margin = 2.0 * cfg.rrh_spacing
            for site in self.sites:
                self.shadow_fields[site.id] = ch.ShadowingField(
                    x_min=-margin,
                    x_max=cfg.track_length + margin,
                    sigma_db=cfg.shadowing_sigma_db,
                    decorrelation_distance=cfg.shadowing_decorrelation_m,
                    seed=_substream(self.master_seed, 0, site.id, _PURPOSE_SHADOW),
                )

    def tx_gain_profile_db(self, aod: float) -> np.ndarray:
        """Per-symbol transmit beam gain toward `aod` over the burst window:
        the swept beam during each SS block, a fixed boresight sector beam for
        the data symbols (data is not user-tracked)."""
        data_boresight = min(self.tx_arrays, key=lambda b: abs(aod - b))
        data_gain = ch.panel_gain(self.tx_arrays[data_boresight], data_boresight, aod)
        gains = np.full(self.burst_symbols, data_gain)
        for i in range(self.sched.num_blocks):
            boresight = self.block_panels[i]
            g = ch.panel_gain(
                self.tx_arrays[boresight], self.sched.sweep_angle(i), aod
            )
            sym0 = self.sched.block_symbol(i, self.num)
            gains[sym0 : sym0 + self.layout.symbol_span] = g
        return gains

    def symbol_gains_to_samples(self, gains_sym: np.ndarray) -> np.ndarray:
        lengths = [
            self.num.cp_length(g) + self.num.fft_size for g in range(self.burst_symbols)
        ]
        return np.repeat(gains_sym, lengths)


def synthesize_epoch(ctx: SimContext, epoch: int):
    """Synthesize one epoch's received burst and measure the serving RRHs.

    Returns (truth kinematics, list of MeasurementRecord).
    """
    cfg = ctx.cfg
    t = epoch * cfg.epoch_interval
    truth = cfg.profile().kinematics_at(t)
    train = truth.position
    geometric = cfg.channel_profile == "geometric"

    serving = geo.select_serving_rrhs(
        train, ctx.sites, cfg.serving_count, carrier_freq=cfg.carrier_freq
    )
    if geometric:
        audible = list(serving)
    else:
        by_dist = sorted(
            ctx.sites, key=lambda s: (geo.los_geometry(train, s)[0], s.id)
        )
        audible = by_dist[: max(cfg.num_interferers, cfg.serving_count)]
        audible_ids = {s.id for s in audible}
        audible += [s for s in serving if s.id not in audible_ids]

    boresights = tuple(ctx.rx_panels.keys())
    streams = []  # (pre-rx-gain stream, delay, per-panel rx gain dB)
    best_panel = {}
    for site in audible:
        dist, aod, _ = geo.los_geometry(train, site)
        delay = int(round(dist / SPEED_OF_LIGHT * ctx.fs))
        shadow = (
            ctx.shadow_fields[site.id].sample(train[0]) if site.id in ctx.shadow_fields else 0.0
        )
        arrival = math.atan2(site.position[1] - train[1], site.position[0] - train[0])
        rx_gains = {
            b: ch.panel_gain(ctx.rx_panels[b], b, arrival) for b in boresights
        }
        best_panel[site.id] = max(boresights, key=lambda b: rx_gains[b])
        pl = ch.path_loss(dist, cfg.carrier_freq)
        base_dbm = site.tx_power_dbm - pl + shadow

        grid = wf.ResourceGrid(ctx.num.active_subcarriers, ctx.burst_symbols)
        wf.schedule_burst_set(
            ctx.sched,
            grid,
            site.identity,
            _substream(ctx.master_seed, epoch, site.id, _PURPOSE_PAYLOAD),
            layout=ctx.layout,
            num=ctx.num,
        )
        tx = wf.ofdm_modulate(grid, ctx.num)

        gains_sym = ctx.tx_gain_profile_db(aod)
        env_dbm = base_dbm + ctx.symbol_gains_to_samples(gains_sym)

        if geometric:
            taps = ch.unit_tap(ctx.fs)
        else:
            speed = truth.speed
            fd_max = ch.max_doppler(speed, cfg.carrier_freq)
            vx, vy = truth.velocity
            dxu = (site.position[0] - train[0]) / dist
            dyu = (site.position[1] - train[1]) / dist
            fd_los = (vx * dxu + vy * dyu) * cfg.carrier_freq / SPEED_OF_LIGHT
            taps = ch.tdl_d_taps(
                duration=(ctx.burst_samples + 256) / ctx.fs,
                sample_rate=ctx.fs,
                max_doppler=fd_max,
                seed=_substream(ctx.master_seed, epoch, site.id, _PURPOSE_FADING),
                los_doppler_hz=fd_los,
                rms_delay_spread_s=cfg.rms_delay_spread_ns * 1e-9,
                k_factor_db=cfg.k_factor_db,
            )
        streams.append((ch.apply_link(tx, taps, env_dbm, ctx.fs), delay, rx_gains))

    panel_rx = {}
    for p_idx, b in enumerate(boresights):
        scaled = [
            (wf.BasebandBuffer(buf.samples * 10.0 ** (gains[b] / 20.0), buf.sample_rate), delay)
            for buf, delay, gains in streams
        ]
        panel_rx[b] = ch.superpose_rrhs(
            scaled,
            None if geometric else ctx.noise_dbm,
            _substream(ctx.master_seed, epoch, p_idx, _PURPOSE_NOISE),
            out_len=ctx.rx_len,
            sample_rate=ctx.fs,
        )

    records = []
    for site in serving:
        meas = est.measure_rrh(
            panel_rx[best_panel[site.id]],
            site,
            ctx.sched,
            ctx.num,
            layout=ctx.layout,
            reference=ctx.block_refs[site.identity],
            epoch_time=t,
        )
        if meas is None:
            continue
        dist, aod, _ = geo.los_geometry(train, site)
        records.append(
            MeasurementRecord(
                epoch=epoch,
                t=t,
                rrh_id=site.id,
                rrh_x=site.position[0],
                rrh_y=site.position[1],
                aod_est=meas.aod_estimate,
                toa_est=meas.toa_estimate,
                delay_samples=meas.delay_samples,
                num_detected_blocks=meas.num_detected_blocks,
                aod_true=aod,
                toa_true=dist / SPEED_OF_LIGHT,
                distance_true=dist,
            )
        )
    return truth, records


# worker-process state for parallel epoch synthesis
_WORKER_CTX: SimContext | None = None


def _init_worker(cfg_dict: dict, master_seed: int):
    global _WORKER_CTX
    _WORKER_CTX = SimContext(SimConfig(**cfg_dict), master_seed)


def _run_epoch(epoch: int):
    return epoch, synthesize_epoch(_WORKER_CTX, epoch)


def simulate_measurements(
    cfg: SimConfig, master_seed: int, workers: int | None = None
) -> list[tuple[geo.TrainKinematics, list[MeasurementRecord]]]:
    """Synthesize every epoch's measurements (no tracking).

    Results are identical for any worker count.
    """
    workers = cfg.workers if workers is None else workers
    epochs = list(range(cfg.num_epochs))
    if not epochs:
        return []
    if workers <= 1 or len(epochs) == 1:
        ctx = SimContext(cfg, master_seed)
        return [synthesize_epoch(ctx, e) for e in epochs]
    results: dict[int, tuple] = {}
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(cfg.to_dict(), master_seed)
    ) as pool:
        for epoch, payload in pool.map(_run_epoch, epochs, chunksize=4):
            results[epoch] = payload
    return [results[e] for e in epochs]


def track_epochs(
    cfg: SimConfig,
    epoch_data: list[tuple[geo.TrainKinematics, list[MeasurementRecord]]],
    mode: str | None = None,
) -> list[EpochRecord]:
    """Run the tracking filter over synthesized measurements and assemble
    per-epoch records. `mode` overrides the configured row selection."""
    mode = mode or cfg.mode
    model = trk.MotionModel(dt=cfg.epoch_interval, sigma_a2=cfg.sigma_a2)

    def to_set(recs: list[MeasurementRecord]) -> trk.MeasurementSet | None:
        if not recs:
            return None
        return trk.MeasurementSet(
            rrh_positions=np.array([[m.rrh_x, m.rrh_y] for m in recs]),
            aod=np.array([m.aod_est for m in recs]),
            toa=np.array([m.toa_est for m in recs]),
            sigma_aod=cfg.sigma_aod_rad,
            sigma_toa=cfg.sigma_toa_s,
            mode=mode,
        )

    sets = [to_set(recs) for _, recs in epoch_data]
    first = next((s for s in sets if s is not None), None)
    if first is not None:
        init = trk.initial_state(first, expected_x=cfg.initial_position_x)
    else:
        init = trk.StateEstimate(
            s=np.array([cfg.initial_position_x, 0, 0, 0, 0, 0]),
            P=np.diag((100.0**2, 1.0, 50.0**2, 1.0, 10.0**2, 1.0)),
            epoch_index=-1,
        )
    states = trk.run_filter(sets, model, init)
    records = []
    for (truth, recs), state in zip(epoch_data, states):
        err = math.hypot(
            truth.position[0] - state.s[0], truth.position[1] - state.s[1]
        )
        records.append(
            EpochRecord(
                epoch=state.epoch_index,
                t=truth.t,
                truth=truth,
                measurements=recs,
                state=state.s.copy(),
                position_error=err,
            )
        )
    return records


def compute_metrics(records: list[EpochRecord]) -> MetricsSummary:
    """Empirical error statistics (nearest-rank percentiles)."""
    if not records:
        raise ValueError("compute_metrics needs at least one record")
    errors = np.array([r.position_error for r in records])
    meas = [m for r in records for m in r.measurements]
    ang = np.array([m.angle_error_deg for m in meas]) if meas else np.array([])
    dst = np.array([m.distance_error_m for m in meas]) if meas else np.array([])
    return MetricsSummary(
        num_epochs=len(records),
        num_measurements=len(meas),
        mean_error=float(errors.mean()),
        error_percentiles={p: nearest_rank(errors, p) for p in PERCENTILE_LEVELS},
        submeter_availability=float(np.mean(errors < 1.0)),
        angle_error_percentiles={p: nearest_rank(ang, p) for p in PERCENTILE_LEVELS},
        distance_error_percentiles={p: nearest_rank(dst, p) for p in PERCENTILE_LEVELS},
    )


def run_simulation(
    cfg: SimConfig, master_seed: int, workers: int | None = None
) -> tuple[list[EpochRecord], MetricsSummary | None]:
    """Full pipeline: synthesize measurements, track, compute metrics."""
    epoch_data = simulate_measurements(cfg, master_seed, workers=workers)
    if not epoch_data:
        return [], None
    records = track_epochs(cfg, epoch_data)
    return records, compute_metrics(records)


# --- CSV export ---------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.9g}"


EPOCH_COLUMNS = (
    "epoch,t,true_x,true_y,true_vx,true_vy,true_ax,true_ay,"
    "est_x,est_y,est_vx,est_vy,est_ax,est_ay,pos_error_m,num_measurements"
).split(",")

MEASUREMENT_COLUMNS = (
    "epoch,t,rrh_id,rrh_x,rrh_y,aod_est_deg,toa_est_s,delay_samples,"
    "num_detected_blocks,aod_true_deg,toa_true_s,angle_error_deg,distance_error_m"
).split(",")


def export_records(
    records: list[EpochRecord], summary: MetricsSummary | None, out_dir
) -> dict[str, str]:
    """Write epochs.csv / measurements.csv / summary.csv into out_dir.

    Floats carry 9 significant digits; ordering is deterministic, so
    re-exporting identical records yields byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "epochs": os.path.join(out_dir, "epochs.csv"),
        "measurements": os.path.join(out_dir, "measurements.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
    }
    try:
        with open(paths["epochs"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EPOCH_COLUMNS)
            for r in records:
                w.writerow(
                    [
                        r.epoch,
                        _fmt(r.t),
                        _fmt(r.truth.position[0]),
                        _fmt(r.truth.position[1]),
                        _fmt(r.truth.velocity[0]),
                        _fmt(r.truth.velocity[1]),
                        _fmt(r.truth.acceleration[0]),
                        _fmt(r.truth.acceleration[1]),
                        *[_fmt(v) for v in r.state],
                        _fmt(r.position_error),
                        len(r.measurements),
                    ]
                )
        with open(paths["measurements"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MEASUREMENT_COLUMNS)
            for r in records:
                for m in r.measurements:
                    w.writerow(
                        [
                            m.epoch,
                            _fmt(m.t),
                            m.rrh_id,
                            _fmt(m.rrh_x),
                            _fmt(m.rrh_y),
                            _fmt(math.degrees(m.aod_est)),
                            _fmt(m.toa_est),
                            m.delay_samples,
                            m.num_detected_blocks,
                            _fmt(math.degrees(m.aod_true)),
                            _fmt(m.toa_true),
                            _fmt(m.angle_error_deg),
                            _fmt(m.distance_error_m),
                        ]
                    )
        with open(paths["summary"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for name, value in summary_rows(summary):
                w.writerow([name, _fmt(value)])
    except OSError as exc:
        raise OSError(f"failed writing results under {out_dir}: {exc}") from exc
    return paths


def summary_rows(summary: MetricsSummary | None) -> list[tuple[str, float]]:
    if summary is None:
        return []
    rows = [
        ("num_epochs", summary.num_epochs),
        ("num_measurements", summary.num_measurements),
        ("mean_error_m", summary.mean_error),
        ("submeter_availability", summary.submeter_availability),
    ]
    rows += [(f"pos_error_p{p}_m", v) for p, v in summary.error_percentiles.items()]
    rows += [(f"angle_error_p{p}_deg", v) for p, v in summary.angle_error_percentiles.items()]
    rows += [
        (f"distance_error_p{p}_m", v) for p, v in summary.distance_error_percentiles.items()
    ]
    return rows


def metrics_from_csv(out_dir) -> MetricsSummary:
    """Recompute a MetricsSummary from exported epochs.csv/measurements.csv."""
    epath = os.path.join(out_dir, "epochs.csv")
    mpath = os.path.join(out_dir, "measurements.csv")
    with open(epath, newline="") as fh:
        epoch_rows = list(csv.DictReader(fh))
    if not epoch_rows:
        raise ValueError(f"{epath} holds no epochs")
    errors = np.array([float(r["pos_error_m"]) for r in epoch_rows])
    ang, dst = np.array([]), np.array([])
    if os.path.exists(mpath):
        with open(mpath, newline="") as fh:
            meas_rows = list(csv.DictReader(fh))
        ang = np.array([float(r["angle_error_deg"]) for r in meas_rows])
        dst = np.array([float(r["distance_error_m"]) for r in meas_rows])
    return MetricsSummary(
        num_epochs=len(epoch_rows),
        num_measurements=len(ang),
        mean_error=float(errors.mean()),
        error_percentiles={p: nearest_rank(errors, p) for p in PERCENTILE_LEVELS},
        submeter_availability=float(np.mean(errors < 1.0)),
        angle_error_percentiles={p: nearest_rank(ang, p) for p in PERCENTILE_LEVELS},
        distance_error_percentiles={p: nearest_rank(dst, p) for p in PERCENTILE_LEVELS},
    )
