"""CP-OFDM downlink waveform: numerology, sync sequences, SS-block burst sets.

Builds the frequency-domain resource grid for one 2 ms burst window (two
subframes, 64 beam-swept SS blocks, full-buffer data elsewhere) and converts
it to/from time-domain sample streams at 245.76 MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class WaveformError(ValueError):
    """Grid/layout/sequence contract violation."""


@dataclass(frozen=True)
class Numerology:
    """240 kHz SCS frame constants (1024-point transform, 245.76 MHz rate)."""

    scs_hz: float = 240e3
    fft_size: int = 1024
    active_subcarriers: int = 600
    cp_normal: int = 72
    cp_extended: int = 200
    symbols_per_slot: int = 14
    slots_per_subframe: int = 16

    def __post_init__(self):
        if self.sample_rate_hz != self.scs_hz * self.fft_size:
            raise WaveformError("sample_rate must equal scs * fft_size")

    @property
    def sample_rate_hz(self) -> float:
        return self.scs_hz * self.fft_size

    @property
    def symbols_per_subframe(self) -> int:
        return self.symbols_per_slot * self.slots_per_subframe  # 224

    @property
    def samples_per_subframe(self) -> int:
        n_sym = self.symbols_per_subframe
        return n_sym * self.fft_size + 2 * self.cp_extended + (n_sym - 2) * self.cp_normal

    def is_extended(self, symbol_index: int) -> bool:
        """Extended CP on the first and middle symbol of every subframe."""
        return symbol_index % (self.symbols_per_subframe // 2) == 0

    def cp_length(self, symbol_index: int) -> int:
        return self.cp_extended if self.is_extended(symbol_index) else self.cp_normal

    def symbol_starts(self, num_symbols: int, first_symbol_index: int = 0) -> np.ndarray:
        """Start sample of each symbol (CP included), relative to symbol 0's CP."""
        lengths = np.array(
            [
                self.cp_length(first_symbol_index + g) + self.fft_size
                for g in range(num_symbols)
            ],
            dtype=np.int64,
        )
        starts = np.zeros(num_symbols, dtype=np.int64)
        starts[1:] = np.cumsum(lengths[:-1])
        return starts

    def num_samples(self, num_symbols: int, first_symbol_index: int = 0) -> int:
        return sum(
            self.cp_length(first_symbol_index + g) + self.fft_size for g in range(num_symbols)
        )


@dataclass
class BasebandBuffer:
    """Complex time-domain sample stream."""

    samples: np.ndarray
    sample_rate: float

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


# --- synchronization sequences -------------------------------------------

_PSS_SHIFT = 43


@lru_cache(maxsize=None)
def _m_sequence(taps: tuple[int, ...], init: tuple[int, ...]) -> np.ndarray:
    """Degree-7 LFSR output bits x[0..126]; x[i+7] = sum of x[i+tap] mod 2."""
    x = np.zeros(127, dtype=np.int64)
    x[:7] = init
    for i in range(127 - 7):
        x[i + 7] = sum(x[i + t] for t in taps) % 2
    return x


@lru_cache(maxsize=8)
def gen_pss(pss_id: int) -> np.ndarray:
    """Length-127 BPSK primary sync sequence for pss_id in 0..2."""
    if not 0 <= pss_id <= 2:
        raise WaveformError(f"pss_id must be in 0..2, got {pss_id}")
    x = _m_sequence((0, 4), (0, 1, 1, 0, 1, 1, 1))
    n = np.arange(127)
    return (1 - 2 * x[(n + _PSS_SHIFT * pss_id) % 127]).astype(np.int64)


@lru_cache(maxsize=1024)
def gen_sss(sss_id: int, pss_id: int) -> np.ndarray:
    """Length-127 BPSK secondary sync sequence from two shifted m-sequences."""
    if not 0 <= sss_id <= 335:
        raise WaveformError(f"sss_id must be in 0..335, got {sss_id}")
    if not 0 <= pss_id <= 2:
        raise WaveformError(f"pss_id must be in 0..2, got {pss_id}")
    x0 = _m_sequence((0, 4), (1, 0, 0, 0, 0, 0, 0))
    x1 = _m_sequence((0, 1), (1, 0, 0, 0, 0, 0, 0))
    m0 = 15 * (sss_id // 112) + 5 * pss_id
    m1 = sss_id % 112
    n = np.arange(127)
    return ((1 - 2 * x0[(n + m0) % 127]) * (1 - 2 * x1[(n + m1) % 127])).astype(np.int64)


# --- resource grid ---------------------------------------------------------


class ResourceGrid:
    """Subcarrier-by-symbol grid of complex values with an occupancy mask."""

    def __init__(self, num_subcarriers: int, num_symbols: int):
        self.values = np.zeros((num_subcarriers, num_symbols), dtype=np.complex128)
        self.mask = np.zeros((num_subcarriers, num_symbols), dtype=bool)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def place(self, sc_start: int, symbol: int, values: np.ndarray, overwrite: bool = False):
        """Write a column segment; refuses to overwrite occupied REs by default."""
        sl = slice(sc_start, sc_start + len(values))
        if not overwrite and np.any(self.mask[sl, symbol]):
            raise WaveformError(
                f"resource elements already occupied at subcarriers "
                f"{sc_start}..{sc_start + len(values) - 1}, symbol {symbol}"
            )
        self.values[sl, symbol] = values
        self.mask[sl, symbol] = True

    def occupied_symbols(self) -> np.ndarray:
        return np.flatnonzero(self.mask.any(axis=0))


@dataclass(frozen=True)
class SSBlockLayout:
    """Fixed geometry of one SS block inside the active band.

    24 PRBs by 4 symbols; the 127 sync subcarriers sit centered inside the
    block span, PSS on relative symbol 0 and SSS on relative symbol 2, with
    placeholder payload on the remaining REs of symbols 1-3.
    """

    prb_span: int = 24
    symbol_span: int = 4
    pss_symbol: int = 0
    sss_symbol: int = 2
    sync_length: int = 127

    @property
    def num_subcarriers(self) -> int:
        return 12 * self.prb_span

    @property
    def sync_offset(self) -> int:
        return (self.num_subcarriers - self.sync_length) // 2

    def block_sc_start(self, active_subcarriers: int) -> int:
        return (active_subcarriers - self.num_subcarriers) // 2


def _unit_qpsk(rng: np.random.Generator, n: int) -> np.ndarray:
    return (
        rng.choice((1, -1), size=n) + 1j * rng.choice((1, -1), size=n)
    ) / np.sqrt(2.0)


_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)


def _unit_qam16(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.choice(_QAM16_LEVELS, size=n) + 1j * rng.choice(_QAM16_LEVELS, size=n)


def assemble_ss_block(
    layout: SSBlockLayout, pss: np.ndarray, sss: np.ndarray, seed
) -> ResourceGrid:
    """One SS-block grid fragment: PSS/SSS on the sync subcarriers, unit-power
    placeholder QPSK on the payload positions, zeros elsewhere."""
    if len(pss) != layout.sync_length or len(sss) != layout.sync_length:
        raise WaveformError(
            f"sequences must have length {layout.sync_length}, "
            f"got {len(pss)} and {len(sss)}"
        )
    rng = np.random.default_rng(seed)
    frag = ResourceGrid(layout.num_subcarriers, layout.symbol_span)
    off = layout.sync_offset
    frag.place(off, layout.pss_symbol, pss.astype(np.complex128))
    frag.place(off, layout.sss_symbol, sss.astype(np.complex128))
    n_sc = layout.num_subcarriers
    for sym in range(1, layout.symbol_span):
        if sym == layout.sss_symbol:
            frag.place(0, sym, _unit_qpsk(rng, off))
            frag.place(off + layout.sync_length, sym, _unit_qpsk(rng, n_sc - off - layout.sync_length))
        else:
            frag.place(0, sym, _unit_qpsk(rng, n_sc))
    return frag


# --- burst schedule ---------------------------------------------------------


@dataclass(frozen=True)
class BurstSchedule:
    """Placement and beam-sweep bookkeeping for one 64-block SS burst set."""

    num_blocks: int = 64
    blocks_per_slot: int = 2
    block_start_symbols: tuple[int, ...] = (2, 9)
    burst_period_s: float = 0.1
    sweep_span_rad: float = np.pi  # beams cover 0 .. -180 degrees

    def __post_init__(self):
        if self.num_blocks % self.blocks_per_slot != 0:
            raise WaveformError("num_blocks must be a multiple of blocks_per_slot")
        if len(self.block_start_symbols) != self.blocks_per_slot:
            raise WaveformError("need one start symbol per block in a slot")

    @property
    def num_slots(self) -> int:
        return self.num_blocks // self.blocks_per_slot  # 32 slots = 2 ms

    def num_symbols(self, num: Numerology) -> int:
        return self.num_slots * num.symbols_per_slot

    def burst_samples(self, num: Numerology) -> int:
        return num.num_samples(self.num_symbols(num))

    def burst_duration_s(self, num: Numerology) -> float:
        return self.burst_samples(num) / num.sample_rate_hz

    def block_symbol(self, block_index: int, num: Numerology) -> int:
        slot, pos = divmod(block_index, self.blocks_per_slot)
        return slot * num.symbols_per_slot + self.block_start_symbols[pos]

    def sweep_angle(self, block_index) -> np.ndarray | float:
        """Beam angle of block i: -(i + 0.5) * span/num_blocks, radians."""
        return -(np.asarray(block_index) + 0.5) * self.sweep_span_rad / self.num_blocks

    @property
    def sweep_angles(self) -> np.ndarray:
        return self.sweep_angle(np.arange(self.num_blocks))

    def block_start_samples(self, num: Numerology) -> np.ndarray:
        """Nominal first sample (CP start) of every block in the burst."""
        starts = num.symbol_starts(self.num_symbols(num))
        return np.array(
            [starts[self.block_symbol(i, num)] for i in range(self.num_blocks)],
            dtype=np.int64,
        )

    def segment_length(self, num: Numerology) -> int:
        """K: minimum pairwise spacing of block start samples."""
        ups = self.block_start_samples(num)
        return int(np.min(np.diff(ups)))


@dataclass(frozen=True)
class BlockPlacement:
    """Where one SS block landed and which beam carried it."""

    index: int
    start_symbol: int
    start_sample: int
    sweep_angle: float


def schedule_burst_set(
    sched: BurstSchedule,
    grid: ResourceGrid,
    cell: tuple[int, int],
    seed,
    layout: SSBlockLayout | None = None,
    num: Numerology | None = None,
    fill_data: bool = True,
) -> list[BlockPlacement]:
    """Place all SS blocks of one burst set into grid and fill the remaining
    resource elements with unit-power random 16-QAM (full-buffer traffic).

    Returns per-block metadata (start symbol, start sample, sweep angle).
    The grid is modified in place.
    """
    layout = layout or SSBlockLayout()
    num = num or Numerology()
    pss_id, sss_id = cell
    pss = gen_pss(pss_id)
    sss = gen_sss(sss_id, pss_id)
    if grid.shape[1] < sched.num_symbols(num):
        raise WaveformError(
            f"grid has {grid.shape[1]} symbols, burst needs {sched.num_symbols(num)}"
        )
    sc0 = layout.block_sc_start(grid.shape[0])
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    block_seeds = seq.spawn(sched.num_blocks + 1)
    starts = sched.block_start_samples(num)
    placements = []
    for i in range(sched.num_blocks):
        frag = assemble_ss_block(layout, pss, sss, block_seeds[i])
        sym0 = sched.block_symbol(i, num)
        for rel_sym in range(layout.symbol_span):
            col = frag.values[:, rel_sym]
            frag_mask = frag.mask[:, rel_sym]
            sl = slice(sc0, sc0 + layout.num_subcarriers)
            if np.any(grid.mask[sl, sym0 + rel_sym]):
                raise WaveformError(f"SS block {i} overlaps occupied resource elements")
            grid.values[sl, sym0 + rel_sym] = col
            grid.mask[sl, sym0 + rel_sym] = frag_mask
        placements.append(
            BlockPlacement(
                index=i,
                start_symbol=sym0,
                start_sample=int(starts[i]),
                sweep_angle=float(sched.sweep_angle(i)),
            )
        )
    if fill_data:
        rng = np.random.default_rng(block_seeds[-1])
        free = ~grid.mask
        grid.values[free] = _unit_qam16(rng, int(free.sum()))
        grid.mask[:] = True
    return placements


# --- OFDM modulation --------------------------------------------------------


def ofdm_modulate(
    grid: ResourceGrid | np.ndarray,
    num: Numerology,
    first_symbol_index: int = 0,
    normalize: bool = True,
) -> BasebandBuffer:
    """CP-OFDM modulate a grid: centered subcarrier mapping (DC transmitted),
    orthonormal inverse transform, per-symbol CP by global symbol index.

    With normalize=True the output has unit average power over occupied
    (nonzero) symbol spans.
    """
    values = grid.values if isinstance(grid, ResourceGrid) else np.asarray(grid)
    n_sc, n_sym = values.shape
    if n_sc != num.active_subcarriers:
        raise WaveformError(
            f"grid has {n_sc} subcarriers, numerology expects {num.active_subcarriers}"
        )
    spec = np.zeros((n_sym, num.fft_size), dtype=np.complex128)
    bins = (np.arange(n_sc) - n_sc // 2) % num.fft_size
    spec[:, bins] = values.T
    bodies = np.fft.ifft(spec, axis=1, norm="ortho")
    total = num.num_samples(n_sym, first_symbol_index)
    out = np.empty(total, dtype=np.complex128)
    pos = 0
    occupied_samples = 0
    energy = 0.0
    for g in range(n_sym):
        cp = num.cp_length(first_symbol_index + g)
        body = bodies[g]
        out[pos : pos + cp] = body[-cp:]
        out[pos + cp : pos + cp + num.fft_size] = body
        if np.any(values[:, g]):
            span = out[pos : pos + cp + num.fft_size]
            energy += float(np.real(np.vdot(span, span)))
            occupied_samples += cp + num.fft_size
        pos += cp + num.fft_size
    if normalize and energy > 0.0:
        out /= np.sqrt(energy / occupied_samples)
    return BasebandBuffer(samples=out, sample_rate=num.sample_rate_hz)


def ofdm_demodulate(
    buffer: BasebandBuffer | np.ndarray,
    num: Numerology,
    num_symbols: int,
    first_symbol_index: int = 0,
) -> np.ndarray:
    """Strip CPs and forward-transform back to an active-subcarrier grid."""
    samples = buffer.samples if isinstance(buffer, BasebandBuffer) else np.asarray(buffer)
    n_sc = num.active_subcarriers
    grid = np.zeros((n_sc, num_symbols), dtype=np.complex128)
    bins = (np.arange(n_sc) - n_sc // 2) % num.fft_size
    pos = 0
    for g in range(num_symbols):
        cp = num.cp_length(first_symbol_index + g)
        body = samples[pos + cp : pos + cp + num.fft_size]
        spec = np.fft.fft(body, norm="ortho")
        grid[:, g] = spec[bins]
        pos += cp + num.fft_size
    return grid


# --- reference waveforms ----------------------------------------------------


def _sync_only_grid(
    cell: tuple[int, int], sched: BurstSchedule, num: Numerology, layout: SSBlockLayout
) -> ResourceGrid:
    grid = ResourceGrid(num.active_subcarriers, sched.num_symbols(num))
    pss_id, sss_id = cell
    pss = gen_pss(pss_id).astype(np.complex128)
    sss = gen_sss(sss_id, pss_id).astype(np.complex128)
    sc0 = layout.block_sc_start(num.active_subcarriers) + layout.sync_offset
    for i in range(sched.num_blocks):
        sym0 = sched.block_symbol(i, num)
        grid.place(sc0, sym0 + layout.pss_symbol, pss)
        grid.place(sc0, sym0 + layout.sss_symbol, sss)
    return grid


def reference_waveform(
    cell: tuple[int, int],
    sched: BurstSchedule,
    num: Numerology,
    layout: SSBlockLayout | None = None,
) -> BasebandBuffer:
    """Burst-length waveform containing only the PSS/SSS resource elements
    (payload and data zeroed); timing identical to the transmitted burst."""
    layout = layout or SSBlockLayout()
    return ofdm_modulate(_sync_only_grid(cell, sched, num, layout), num)


def block_reference_waveform(
    cell: tuple[int, int],
    num: Numerology,
    layout: SSBlockLayout | None = None,
) -> BasebandBuffer:
    """Matched-filter reference for a single SS block: PSS and SSS symbols
    only (payload zeroed), normal-CP timing, starting at the block's CP.

    SS blocks never start on an extended-CP symbol, so one reference serves
    every block of the burst.
    """
    layout = layout or SSBlockLayout()
    grid = ResourceGrid(num.active_subcarriers, layout.symbol_span)
    pss_id, sss_id = cell
    sc0 = layout.block_sc_start(num.active_subcarriers) + layout.sync_offset
    grid.place(sc0, layout.pss_symbol, gen_pss(pss_id).astype(np.complex128))
    grid.place(sc0, layout.sss_symbol, gen_sss(sss_id, pss_id).astype(np.complex128))
    # first_symbol_index=2 keeps every CP at the normal length
    return ofdm_modulate(grid, num, first_symbol_index=2)


def dump_iq(buffer: BasebandBuffer, path) -> None:
    """Debug dump: interleaved float32 I/Q, little-endian, no header."""
    inter = np.empty(2 * len(buffer.samples), dtype="<f4")
    inter[0::2] = buffer.samples.real
    inter[1::2] = buffer.samples.imag
    inter.tofile(path)
