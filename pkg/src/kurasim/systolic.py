"""Cycle-accurate model of the N_h x N_w Kuramoto drift array.

Data movement per tile (halo h = M // 2, halo-extended field of
(N_h + M - 1) x (N_w + M - 1) transformed samples):

prefill (N_w cycles)
    The column buffer pops one column per cycle. Its upper M - 1 entries
    enter the left edge of the row buffer, the lower N_h entries the left
    edge of the PE array; existing contents shift right. Columns are
    streamed right-to-left, so afterwards PE (r, c) holds the sample at
    pixel offset (+h, +h) from its center.

offset sweep (M * M cycles)
    For each horizontal step the PEs first snapshot their operand
    registers, then consume one operand per cycle while the row buffer
    rotates downward, feeding its bottom row into the top of the array
    (source row offsets +h .. -h). On the block's last cycle the snapshot
    is restored and the next column is injected from the left (source
    column offset decreases by one). At source offset (0, 0) the operand
    is written to the center buffers instead of being accumulated.

combine (1 cycle)
    Each PE forms ``cos_c * S - sin_c * C`` into its output register.

The output registers shift out of the right edge during the next tile's
prefill, so the steady-state cost is N_w + M**2 + 1 cycles per tile. The
final tile's drain is treated as completing inside its combine cycle.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import fixedpoint as fx
from .drift import Boundary, DriftField, FixedDrift, QuantizedParams, pad_codes
from .fixedpoint import PhaseMap, SaturationCounter
from .noise import NoiseStream
from .trig import QuarterWaveLut, default_lut, sincos_q15


class SchedulingError(AssertionError):
    """An internal invariant of the array schedule was violated (simulator bug)."""


@dataclass(frozen=True)
class ArrayConfig:
    N_h: int
    N_w: int
    M: int = 5
    f_clk: float = 1.0e8

    def __post_init__(self):
        if self.N_h < 1 or self.N_w < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.N_h}x{self.N_w}")
        if self.M < 3 or self.M % 2 == 0:
            raise ValueError(f"M must be odd and >= 3, got {self.M}")
        if not (self.f_clk > 0 and math.isfinite(self.f_clk)):
            raise ValueError("f_clk must be positive")

    @property
    def name(self) -> str:
        return f"H{self.N_h}W{self.N_w}"

    @property
    def tile_cycles(self) -> int:
        return self.N_w + self.M * self.M + 1


@dataclass(frozen=True)
class Tile:
    index: int
    row0: int
    col0: int
    rows: int  # valid (in-image) rows
    cols: int
    partial: bool = False


@dataclass(frozen=True)
class TilePlan:
    width: int
    height: int
    config: ArrayConfig
    tile_rows: int
    tile_cols: int
    tiles: tuple

    @property
    def halo(self) -> int:
        return self.config.M // 2

    def __len__(self):
        return len(self.tiles)


def plan_tiles(width: int, height: int, config: ArrayConfig) -> TilePlan:
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    tr = -(-height // config.N_h)
    tc = -(-width // config.N_w)
    tiles = []
    for ty in range(tr):
        for tx in range(tc):
            r0, c0 = ty * config.N_h, tx * config.N_w
            rows = min(config.N_h, height - r0)
            cols = min(config.N_w, width - c0)
            partial = rows < config.N_h or cols < config.N_w
            tiles.append(Tile(len(tiles), r0, c0, rows, cols, partial))
    return TilePlan(width, height, config, tr, tc, tuple(tiles))


@dataclass
class TileCycles:
    prefill: int = 0
    sweep: int = 0
    drain: int = 0

    @property
    def total(self) -> int:
        return self.prefill + self.sweep + self.drain


@dataclass
class CycleTrace:
    per_tile: list = field(default_factory=list)
    streamer_conversions: list = field(default_factory=list)
    events: list | None = None

    @property
    def per_tile_cycles(self) -> list:
        return [t.total for t in self.per_tile]

    @property
    def total_cycles(self) -> int:
        return sum(self.per_tile_cycles)

    @property
    def prefill_cycles(self) -> int:
        return sum(t.prefill for t in self.per_tile)

    @property
    def sweep_cycles(self) -> int:
        return sum(t.sweep for t in self.per_tile)

    @property
    def drain_cycles(self) -> int:
        return sum(t.drain for t in self.per_tile)

    def seconds(self, f_clk: float) -> float:
        return self.total_cycles / f_clk

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tile_index", "prefill", "sweep", "drain", "total"])
            for k, t in enumerate(self.per_tile):
                w.writerow([k, t.prefill, t.sweep, t.drain, t.total])

    def write_event_log(self, path) -> None:
        if self.events is None:
            raise ValueError("trace was recorded without events")
        with open(path, "w") as fh:
            for cyc, phase, tile, dx, dy in self.events:
                off = "" if dx is None else f" dx={dx:+d} dy={dy:+d}"
                fh.write(f"{cyc} tile={tile} {phase}{off}\n")


@dataclass
class TileResult:
    core: np.ndarray  # Q8.24, N_h x N_w
    sin_c: np.ndarray  # Q1.15
    cos_c: np.ndarray
    cycles: TileCycles
    conversions: int = 0


class _Streamer:
    """Converts halo columns to (sin, cos) and fills the column buffer.

    One column per cycle, whenever the buffer has room; runs ahead into the
    next tile's columns while the current tile sweeps.
    """

    def __init__(self, capacity: int, lut: QuarterWaveLut):
        self.capacity = capacity
        self.lut = lut
        self.pending = deque()  # (tile_index, raw column)
        self.buffer = deque()  # (tile_index, sin column, cos column)
        self.conversions: dict[int, int] = {}

    def enqueue_tile(self, tile_index: int, halo_field: np.ndarray) -> None:
        # rightmost column first
        for b in range(halo_field.shape[1] - 1, -1, -1):
            self.pending.append((tile_index, halo_field[:, b]))

    def tick(self) -> None:
        if self.pending and len(self.buffer) < self.capacity:
            k, col = self.pending.popleft()
            s, c = sincos_q15(col, self.lut)
            self.buffer.append((k, s, c))
            self.conversions[k] = self.conversions.get(k, 0) + len(col)

    def pop(self, tile_index: int):
        if not self.buffer:
            raise SchedulingError("column buffer underflow")
        k, s, c = self.buffer.popleft()
        if k != tile_index:
            raise SchedulingError(f"column from tile {k} popped while processing tile {tile_index}")
        return s, c


class SystolicArray:
    """Register-level state of the PE array, row buffer and column buffer."""

    def __init__(self, config: ArrayConfig, lut: QuarterWaveLut | None = None,
                 record_events: bool = False, overlap: bool = True):
        self.config = config
        self.lut = lut or default_lut()
        self.overlap = overlap
        nh, nw, m = config.N_h, config.N_w, config.M
        self.halo = m // 2
        self.center_index = (m * m) // 2
        self.streamer = _Streamer(nw, self.lut)
        z16 = lambda *s: np.zeros(s, dtype=np.int16)  # noqa: E731
        z32 = lambda *s: np.zeros(s, dtype=np.int32)  # noqa: E731
        # PE operand registers (down-going, CDB/SDB) and their snapshots (CRB/SRB)
        self.sdb, self.cdb = z16(nh, nw), z16(nh, nw)
        self.srb, self.crb = z16(nh, nw), z16(nh, nw)
        self.scb, self.ccb = z16(nh, nw), z16(nh, nw)
        self.acc_s, self.acc_c = z32(nh, nw), z32(nh, nw)
        self.center_writes = np.zeros((nh, nw), dtype=np.int64)
        # row buffer above the array, (M-1) x N_w
        self.rb_s, self.rb_c = z16(m - 1, nw), z16(m - 1, nw)
        # output registers and what is still waiting to be drained
        self.out_core, self.out_s, self.out_c = z32(nh, nw), z16(nh, nw), z16(nh, nw)
        self.draining: int | None = None
        self.drain_left = 0
        self.drained: dict[int, list] = {}
        self.cycle = 0
        self.saturation = SaturationCounter()
        self.events: list | None = [] if record_events else None

    # -- helpers -----------------------------------------------------------

    def _log(self, phase, tile, dx=None, dy=None):
        if self.events is not None:
            self.events.append((self.cycle, phase, tile, dx, dy))

    def _inject_column(self, tile_index: int) -> None:
        s, c = self.streamer.pop(tile_index)
        top = self.config.M - 1
        for reg, col in ((self.rb_s, s[:top]), (self.rb_c, c[:top]),
                         (self.sdb, s[top:]), (self.cdb, c[top:])):
            reg[:, 1:] = reg[:, :-1]
            reg[:, 0] = col

    def _shift_down(self) -> None:
        for reg, rb in ((self.sdb, self.rb_s), (self.cdb, self.rb_c)):
            incoming = rb[-1].copy()
            reg[1:] = reg[:-1]
            reg[0] = incoming
            # the row buffer recirculates so its state survives the sweep
            rb[1:] = rb[:-1].copy()
            rb[0] = incoming

    def _drain_step(self) -> None:
        if self.draining is None:
            return
        # rightmost column leaves through the drain port
        out_col = self.config.N_w - 1 - (self.config.N_w - self.drain_left)
        self.drained[self.draining].append(
            (out_col, self.out_core[:, -1].copy(), self.out_s[:, -1].copy(), self.out_c[:, -1].copy()))
        for reg in (self.out_core, self.out_s, self.out_c):
            reg[:, 1:] = reg[:, :-1]
            reg[:, 0] = 0
        self.drain_left -= 1
        if self.drain_left == 0:
            self.draining = None

    def _flush_drain(self) -> None:
        while self.draining is not None:
            self._drain_step()

    def _tick(self) -> None:
        self.streamer.tick()

    # -- one tile ------------------------------------------------------------

    def process_tile(self, tile_index: int, last: bool = True) -> TileCycles:
        """Run prefill, sweep and combine for a tile already enqueued on the streamer."""
        cfg = self.config
        m, nw = cfg.M, cfg.N_w
        cycles = TileCycles()

        self.acc_s[:] = 0
        self.acc_c[:] = 0
        self.center_writes[:] = 0

        for _ in range(nw):
            self._tick()
            self._log("prefill", tile_index)
            self._drain_step()
            self._inject_column(tile_index)
            self.cycle += 1
            cycles.prefill += 1

        if self.draining is not None:
            raise SchedulingError("previous tile not fully drained by end of prefill")

        k = 0
        h = self.halo
        for bx in range(m):
            dx = h - bx
            for v in range(m):
                dy = h - v
                self._tick()
                self._log("sweep", tile_index, dx, dy)
                if v == 0:
                    self.srb[:] = self.sdb
                    self.crb[:] = self.cdb
                if k == self.center_index:
                    if (dx, dy) != (0, 0):
                        raise SchedulingError(f"center capture at offset {(dx, dy)}")
                    self.scb[:] = self.sdb
                    self.ccb[:] = self.cdb
                    self.center_writes += 1
                else:
                    self.acc_s = fx.acc_add(self.acc_s, fx.q15_to_acc(self.sdb), self.saturation)
                    self.acc_c = fx.acc_add(self.acc_c, fx.q15_to_acc(self.cdb), self.saturation)
                # register updates at the closing clock edge
                if v < m - 1:
                    self._shift_down()
                elif bx < m - 1:
                    self.sdb[:] = self.srb
                    self.cdb[:] = self.crb
                    self._inject_column(tile_index)
                self.cycle += 1
                cycles.sweep += 1
                k += 1

        if not np.all(self.center_writes == 1):
            raise SchedulingError("center buffers not written exactly once")

        # combine: multiply-subtract into the output registers
        self._tick()
        self._log("combine", tile_index)
        self.out_core = fx.acc_sub(fx.mul_q15_acc(self.ccb, self.acc_s, self.saturation),
                                   fx.mul_q15_acc(self.scb, self.acc_c, self.saturation),
                                   self.saturation)
        self.out_s = self.scb.copy()
        self.out_c = self.ccb.copy()
        self.draining = tile_index
        self.drain_left = nw
        self.drained[tile_index] = []
        self.cycle += 1
        cycles.drain += 1

        if not self.overlap:
            # serialized drain: one column per cycle before the next prefill
            while self.draining is not None:
                self._tick()
                self._log("drain", tile_index)
                self._drain_step()
                self.cycle += 1
                cycles.drain += 1
        elif last:
            self._flush_drain()
        return cycles

    def collect(self, tile_index: int):
        """Reassemble a drained tile as (core, sin_c, cos_c) N_h x N_w arrays."""
        cols = self.drained.pop(tile_index)
        if len(cols) != self.config.N_w:
            raise SchedulingError(f"tile {tile_index}: drained {len(cols)} of {self.config.N_w} columns")
        nh, nw = self.config.N_h, self.config.N_w
        core = np.zeros((nh, nw), dtype=np.int32)
        s = np.zeros((nh, nw), dtype=np.int16)
        c = np.zeros((nh, nw), dtype=np.int16)
        for col, vc, vs, vcs in cols:
            core[:, col], s[:, col], c[:, col] = vc, vs, vcs
        return core, s, c


def tile_halo_field(padded: np.ndarray, tile: Tile, config: ArrayConfig) -> np.ndarray:
    """Halo-extended phase codes for a tile, from a map padded by M//2 on top/left."""
    hh = config.N_h + config.M - 1
    ww = config.N_w + config.M - 1
    return padded[tile.row0:tile.row0 + hh, tile.col0:tile.col0 + ww]


def run_tile(halo_field: np.ndarray, config: ArrayConfig, lut: QuarterWaveLut | None = None) -> TileResult:
    """Simulate one isolated tile. ``halo_field`` holds raw phase codes of shape
    (N_h + M - 1, N_w + M - 1)."""
    expected = (config.N_h + config.M - 1, config.N_w + config.M - 1)
    if halo_field.shape != expected:
        raise ValueError(f"halo field shape {halo_field.shape} != {expected}")
    arr = SystolicArray(config, lut)
    arr.streamer.enqueue_tile(0, np.asarray(halo_field))
    cycles = arr.process_tile(0, last=True)
    core, s, c = arr.collect(0)
    return TileResult(core, s, c, cycles, arr.streamer.conversions.get(0, 0))


class PostArrayDatapath:
    """Theta update and reference-term units (outside the PE array)."""

    # phase increments are formed with 18 guard bits before the final rounding
    GUARD = 18

    def __init__(self, qp: QuantizedParams):
        self.qp = qp
        self.saturation = SaturationCounter()

    def drift(self, core, sin_c, cos_c):
        qp, sat = self.qp, self.saturation
        nbr = fx.mul_q15_acc(qp.k_scale, core, sat)
        ref = fx.acc_sub(fx.mul_q15_acc(cos_c, qp.ref_sin, sat),
                         fx.mul_q15_acc(sin_c, qp.ref_cos, sat), sat)
        return fx.acc_add(nbr, ref, sat)

    def update(self, theta, drift, dt: float, D: float, xi, score=None):
        """theta' = wrap(theta + (drift + score) * dt + sqrt(2 D dt) * xi), fixed point.

        ``drift`` is Q8.24, ``score`` real (quantized to Q8.24), ``xi`` standard
        normals. Drift and noise increments are summed with guard bits and
        rounded to a phase code once.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        if D < 0:
            raise ValueError("D must be non-negative")
        total = drift
        if score is not None:
            total = fx.acc_add(total, fx.acc_from_float(score, self.saturation), self.saturation)
        fine = fx.Q15_FRAC + self.GUARD
        gain = int(fx.acc_from_float(dt / math.pi))
        inc = fx.mul_acc_acc(total, gain, fine)
        sigma = math.sqrt(2.0 * D * dt)
        noise = np.rint(sigma * np.asarray(xi, dtype=np.float64) * (2.0 ** fine / math.pi)).astype(np.int64)
        step = fx.shift_rne(inc + noise, self.GUARD)
        return fx.wrap_q15(np.asarray(theta, dtype=np.int64) + step)


def post_array_update(theta_tile, core, sin_c, cos_c, qp: QuantizedParams, dt: float, D: float,
                      noise, score=None):
    """Update one tile of phase codes. ``noise`` is a NoiseStream (drawn in raster
    order) or an array of standard normals."""
    theta_tile = np.asarray(theta_tile)
    xi = noise.normals(theta_tile.shape) if isinstance(noise, NoiseStream) else noise
    if score is not None and np.shape(score) != theta_tile.shape:
        raise ValueError("score field shape mismatch")
    dp = PostArrayDatapath(qp)
    return dp.update(theta_tile, dp.drift(core, sin_c, cos_c), dt, D, xi, score)


@dataclass
class ImageResult:
    fixed: FixedDrift
    trace: CycleTrace
    plan: TilePlan


def run_image(pmap: PhaseMap, config: ArrayConfig, qp: QuantizedParams,
              boundary=Boundary.REPLICATE, lut: QuarterWaveLut | None = None,
              record_events: bool = False, overlap: bool = True) -> ImageResult:
    """Process every tile of ``pmap`` in row-major order.

    Tiles read the unmodified input map and write a separate output buffer,
    so the result does not depend on traversal order.
    """
    if qp.M != config.M:
        raise ValueError(f"params M={qp.M} does not match array M={config.M}")
    plan = plan_tiles(pmap.width, pmap.height, config)
    h = config.M // 2
    extra_r = plan.tile_rows * config.N_h - pmap.height
    extra_c = plan.tile_cols * config.N_w - pmap.width
    padded = pad_codes(pmap.data, h, h + extra_r, h, h + extra_c, boundary)

    arr = SystolicArray(config, lut, record_events=record_events, overlap=overlap)
    post = PostArrayDatapath(qp)
    shape = (pmap.height, pmap.width)
    core_out = np.zeros(shape, dtype=np.int32)
    drift_out = np.zeros(shape, dtype=np.int32)
    s_out = np.zeros(shape, dtype=np.int16)
    c_out = np.zeros(shape, dtype=np.int16)
    trace = CycleTrace(events=arr.events)

    def write_back(tile: Tile):
        core, s, c = arr.collect(tile.index)
        u = post.drift(core, s, c)
        win = (slice(tile.row0, tile.row0 + tile.rows), slice(tile.col0, tile.col0 + tile.cols))
        core_out[win] = core[:tile.rows, :tile.cols]
        s_out[win] = s[:tile.rows, :tile.cols]
        c_out[win] = c[:tile.rows, :tile.cols]
        drift_out[win] = u[:tile.rows, :tile.cols]

    # keep at most two tiles queued on the streamer (current + lookahead)
    tiles = plan.tiles
    for t in tiles[:2]:
        arr.streamer.enqueue_tile(t.index, tile_halo_field(padded, t, config))
    for n, tile in enumerate(tiles):
        last = n == len(tiles) - 1
        cyc = arr.process_tile(tile.index, last=last)
        trace.per_tile.append(cyc)
        if n + 2 < len(tiles):
            nxt = tiles[n + 2]
            arr.streamer.enqueue_tile(nxt.index, tile_halo_field(padded, nxt, config))
        if n > 0:
            write_back(tiles[n - 1])
    write_back(tiles[-1])
    trace.streamer_conversions = [arr.streamer.conversions[t.index] for t in tiles]

    sat = arr.saturation.count + post.saturation.count
    return ImageResult(FixedDrift(DriftField(drift_out), core_out, s_out, c_out, sat), trace, plan)
