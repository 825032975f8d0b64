"""Golden locally-coupled Kuramoto drift kernels.

For pixel ``i`` with M x M neighborhood ``N_i`` (center included)::

    u_i = K / M**2 * sum_j sin(theta_j - theta_i) + K_ref * sin(psi_ref - theta_i)

Three evaluators are provided:

* :func:`drift_direct`, the pairwise form in double precision;
* :func:`drift_reformulated`, the sin/cos accumulation form
  ``cos_i * S_i - sin_i * C_i`` in double precision;
* :func:`drift_fixed`, the bit-exact Q1.15 / Q8.24 functional model that the
  systolic array simulator must reproduce raw-for-raw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import fixedpoint as fx
from .fixedpoint import PhaseMap, SaturationCounter
from .trig import QuarterWaveLut, default_lut, sincos_q15


class Boundary(str, Enum):
    """How phases outside the image are sourced."""

    REPLICATE = "replicate"
    REFLECT = "reflect"
    WRAP = "wrap"
    ZERO = "zero"  # out-of-image neighbors have phase 0 (sin 0, cos 1)

    @classmethod
    def parse(cls, value) -> "Boundary":
        if isinstance(value, Boundary):
            return value
        if value == "zero-phase":
            return cls.ZERO
        return cls(value)


def boundary_index(idx, n: int, mode: Boundary):
    """Map (possibly out-of-range) coordinates onto ``0..n-1``.

    Returns ``(index, inside)``; ``inside`` is False only for ZERO mode
    coordinates that fall outside the image.
    """
    idx = np.asarray(idx, dtype=np.int64)
    inside = (idx >= 0) & (idx < n)
    if mode is Boundary.REPLICATE:
        return np.clip(idx, 0, n - 1), np.ones_like(inside)
    if mode is Boundary.WRAP:
        return idx % n, np.ones_like(inside)
    if mode is Boundary.REFLECT:
        if n == 1:
            return np.zeros_like(idx), np.ones_like(inside)
        period = 2 * (n - 1)
        m = idx % period
        return np.where(m >= n, period - m, m), np.ones_like(inside)
    if mode is Boundary.ZERO:
        return np.clip(idx, 0, n - 1), inside
    raise ValueError(f"unknown boundary mode {mode!r}")


def pad_codes(codes: np.ndarray, top: int, bottom: int, left: int, right: int,
              boundary: Boundary | str) -> np.ndarray:
    """Extend a grid of phase codes according to the boundary policy."""
    boundary = Boundary.parse(boundary)
    h, w = codes.shape
    rows, rin = boundary_index(np.arange(-top, h + bottom), h, boundary)
    cols, cin = boundary_index(np.arange(-left, w + right), w, boundary)
    out = codes[np.ix_(rows, cols)].copy()
    if boundary is Boundary.ZERO:
        out[~np.outer(rin, cin)] = 0
    return out


@dataclass(frozen=True)
class DriftParams:
    K: float = 1.0
    K_ref: float = 0.0
    psi_ref: float = 0.0
    M: int = 5

    def __post_init__(self):
        if self.M < 3 or self.M % 2 == 0:
            raise ValueError(f"M must be odd and >= 3, got {self.M}")
        for name in ("K", "K_ref", "psi_ref"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.K < 0 or self.K_ref < 0:
            raise ValueError("K and K_ref must be non-negative")

    @property
    def neighborhood_count(self) -> int:
        return self.M * self.M

    @property
    def half(self) -> int:
        return self.M // 2


def sweep_offsets(M: int):
    """Neighborhood offsets (dy, dx) of the source pixel relative to the center,
    in the order the array visits them. The center is at index M*M // 2."""
    h = M // 2
    return [(dy, dx) for dx in range(h, -h - 1, -1) for dy in range(h, -h - 1, -1)]


@dataclass
class DriftField:
    """Per-pixel drift values; ``data`` is float64 or raw Q8.24 int32."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def is_fixed(self) -> bool:
        return np.issubdtype(self.data.dtype, np.integer)

    def to_float(self) -> np.ndarray:
        return fx.acc_to_float(self.data) if self.is_fixed else np.asarray(self.data, dtype=np.float64)


# ---------------------------------------------------------------------------
# floating-point paths


def _padded_radians(pmap: PhaseMap, h: int, boundary) -> np.ndarray:
    return fx.decode_phase(pad_codes(pmap.data, h, h, h, h, boundary))


def drift_direct(pmap: PhaseMap, params: DriftParams, boundary=Boundary.REPLICATE) -> DriftField:
    """Pairwise form, double precision."""
    h = params.half
    H, W = pmap.height, pmap.width
    pad = _padded_radians(pmap, h, boundary)
    theta = pmap.radians()
    acc = np.zeros((H, W))
    for dy in range(-h, h + 1):
        for dx in range(-h, h + 1):
            if dy == 0 and dx == 0:
                continue  # sin(0) == 0 exactly
            acc += np.sin(pad[h + dy:h + dy + H, h + dx:h + dx + W] - theta)
    u = params.K / params.neighborhood_count * acc
    u += params.K_ref * np.sin(params.psi_ref - theta)
    return DriftField(u)


def neighbor_sums(pmap: PhaseMap, index, M: int = 5, boundary=Boundary.REPLICATE):
    """(S_i, C_i): sums of sin and cos over the neighborhood of one pixel,
    center excluded. ``index`` is a flat row-major index or a (row, col) pair."""
    if isinstance(index, tuple):
        y, x = index
    else:
        if not 0 <= index < pmap.width * pmap.height:
            raise IndexError(f"pixel index {index} out of range")
        y, x = divmod(index, pmap.width)
    if not (0 <= y < pmap.height and 0 <= x < pmap.width):
        raise IndexError(f"pixel {(y, x)} out of range")
    h = M // 2
    win = pad_codes(pmap.data, h, h, h, h, boundary)[y:y + M, x:x + M]
    theta = fx.decode_phase(win)
    mask = np.ones((M, M), dtype=bool)
    mask[h, h] = False
    return float(np.sin(theta[mask]).sum()), float(np.cos(theta[mask]).sum())


def neighbor_sums_field(pmap: PhaseMap, M: int = 5, boundary=Boundary.REPLICATE):
    h = M // 2
    H, W = pmap.height, pmap.width
    pad = _padded_radians(pmap, h, boundary)
    s_pad, c_pad = np.sin(pad), np.cos(pad)
    S = np.zeros((H, W))
    C = np.zeros((H, W))
    for dy, dx in sweep_offsets(M):
        if dy == 0 and dx == 0:
            continue
        S += s_pad[h + dy:h + dy + H, h + dx:h + dx + W]
        C += c_pad[h + dy:h + dy + H, h + dx:h + dx + W]
    return S, C


def nbr_core(S, C, sin_i, cos_i):
    """Unscaled neighborhood core ``cos_i * S - sin_i * C``."""
    return cos_i * S - sin_i * C


def ref_coefficients(K_ref: float, psi_ref: float):
    """The two per-step constants (K_ref sin psi, K_ref cos psi)."""
    return K_ref * math.sin(psi_ref), K_ref * math.cos(psi_ref)


def ref_term(sin_i, cos_i, K_ref: float, psi_ref: float):
    a, b = ref_coefficients(K_ref, psi_ref)
    return a * cos_i - b * sin_i


def drift_reformulated(pmap: PhaseMap, params: DriftParams, boundary=Boundary.REPLICATE) -> DriftField:
    S, C = neighbor_sums_field(pmap, params.M, boundary)
    theta = pmap.radians()
    sin_i, cos_i = np.sin(theta), np.cos(theta)
    core = nbr_core(S, C, sin_i, cos_i)
    u = params.K / params.neighborhood_count * core
    return DriftField(u + ref_term(sin_i, cos_i, params.K_ref, params.psi_ref))


# ---------------------------------------------------------------------------
# fixed-point path


@dataclass(frozen=True)
class QuantizedParams:
    """Per-step scalars as loaded into the accelerator's configuration registers.

    ``k_scale`` is K / M**2 in Q1.15 (so K < M**2 is required). The reference
    coefficients K_ref*sin(psi_ref) and K_ref*cos(psi_ref) are Q8.24.
    """

    k_scale: int
    ref_sin: int
    ref_cos: int
    M: int = 5

    @classmethod
    def from_params(cls, params: DriftParams) -> "QuantizedParams":
        k = params.K / params.neighborhood_count
        if k >= 1.0:
            raise ValueError(f"K / M^2 = {k} does not fit Q1.15; need K < {params.neighborhood_count}")
        a, b = ref_coefficients(params.K_ref, params.psi_ref)
        if max(abs(a), abs(b)) >= 128.0:
            raise ValueError("K_ref does not fit Q8.24")
        return cls(
            k_scale=int(fx.q15_from_float(k)),
            ref_sin=int(fx.acc_from_float(a)),
            ref_cos=int(fx.acc_from_float(b)),
            M=params.M,
        )


@dataclass
class FixedDrift:
    """Bit-exact drift result.

    ``core`` is the unscaled neighborhood core (Q8.24), ``sin_c``/``cos_c`` the
    captured center components (Q1.15) and ``drift`` the full deterministic
    drift (Q8.24) after scaling and the reference term.
    """

    drift: DriftField
    core: np.ndarray
    sin_c: np.ndarray
    cos_c: np.ndarray
    saturations: int = 0


def combine_fixed(core, sin_c, cos_c, qp: QuantizedParams, counter: SaturationCounter | None = None):
    """Scale the core by K/M^2 and add the reference term, all in Q8.24."""
    nbr = fx.mul_q15_acc(qp.k_scale, core, counter)
    ref = fx.acc_sub(fx.mul_q15_acc(cos_c, qp.ref_sin, counter),
                     fx.mul_q15_acc(sin_c, qp.ref_cos, counter), counter)
    return fx.acc_add(nbr, ref, counter)


def drift_fixed(pmap: PhaseMap, qp: QuantizedParams, boundary=Boundary.REPLICATE,
                lut: QuarterWaveLut | None = None) -> FixedDrift:
    """Functional fixed-point model of the array computation.

    Neighbor components are accumulated in sweep order with saturating Q8.24
    adds; the center offset is captured instead of accumulated.
    """
    lut = lut or default_lut()
    M = qp.M
    h = M // 2
    H, W = pmap.height, pmap.width
    counter = SaturationCounter()
    s_pad, c_pad = sincos_q15(pad_codes(pmap.data, h, h, h, h, boundary), lut)
    S = np.zeros((H, W), dtype=np.int32)
    C = np.zeros((H, W), dtype=np.int32)
    sin_c = cos_c = None
    for dy, dx in sweep_offsets(M):
        win = (slice(h + dy, h + dy + H), slice(h + dx, h + dx + W))
        if dy == 0 and dx == 0:
            sin_c, cos_c = s_pad[win].copy(), c_pad[win].copy()
            continue
        S = fx.acc_add(S, fx.q15_to_acc(s_pad[win]), counter)
        C = fx.acc_add(C, fx.q15_to_acc(c_pad[win]), counter)
    core = fx.acc_sub(fx.mul_q15_acc(cos_c, S, counter), fx.mul_q15_acc(sin_c, C, counter), counter)
    drift = combine_fixed(core, sin_c, cos_c, qp, counter)
    return FixedDrift(DriftField(drift), core, sin_c, cos_c, counter.count)


def fixed_error_bound(qp: QuantizedParams, params: DriftParams, lut_err: float = 2.0 ** -15) -> float:
    """A-priori bound on |drift_fixed - drift_reformulated| in real units.

    ``lut_err`` is the max sin/cos error of the table (normalized units).
    """
    n = params.M * params.M - 1
    # core: |cos_i S - sin_i C| with |S|,|C| <= n and each factor off by lut_err
    core_err = 2 * (n * lut_err + n * lut_err) + 2 * 2.0 ** -25 + 2.0 ** -25
    core_max = 2.0 * n
    k_exact = params.K / params.M ** 2
    k_q = qp.k_scale / 32768.0
    nbr_err = k_q * core_err + abs(k_q - k_exact) * core_max + 2.0 ** -25
    a, b = ref_coefficients(params.K_ref, params.psi_ref)
    ref_err = (abs(a) + abs(b)) * lut_err + 2 * 2.0 ** -25 + 2 * 2.0 ** -25
    return nbr_err + ref_err + 2.0 ** -25
