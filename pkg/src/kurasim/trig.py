"""Quarter-wave sine table with 2-bit linear interpolation.

A phase code is read as an unsigned 16-bit full-turn angle (code 0 is angle
0, codes >= 0x8000 are the negative half turn). The top two bits select the
quadrant, the next twelve index the table and the low two bits interpolate
between adjacent samples. Cosine is the sine of the complementary angle
looked up in the same table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fixedpoint import Q15_MAX, Q15_MIN, shift_rne

LUT_BITS = 12
LUT_SIZE = 1 << LUT_BITS  # stored samples over [0, pi/2)
FRAC_BITS = 2
QUADRANT_SPAN = 1 << (LUT_BITS + FRAC_BITS)  # codes per quarter turn
SAMPLE_MAX = 0xFFFF


@dataclass(frozen=True)
class QuarterWaveLut:
    """4097 unsigned Q0.16 sine samples at k*(pi/2)/4096, k = 0..4096.

    The extra endpoint sample lets the last segment interpolate without a
    special case. sin(pi/2) = 1.0 is not representable and is clamped.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.int64)
        if s.shape != (LUT_SIZE + 1,):
            raise ValueError(f"expected {LUT_SIZE + 1} samples, got {s.shape}")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def quarter_sine(self, offset):
        """Interpolated Q0.16 sine for in-quadrant offsets 0..16384."""
        offset = np.asarray(offset, dtype=np.int64)
        k = offset >> FRAC_BITS
        f = offset & ((1 << FRAC_BITS) - 1)
        lo = self.samples[k]
        hi = self.samples[np.minimum(k + 1, LUT_SIZE)]  # f == 0 whenever k == LUT_SIZE
        return ((lo * (4 - f) + hi * f + 2) >> FRAC_BITS)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value"])
            for k, v in enumerate(self.samples):
                w.writerow([k, int(v)])


def build_lut() -> QuarterWaveLut:
    k = np.arange(LUT_SIZE + 1, dtype=np.float64)
    raw = np.rint(np.sin(k * (math.pi / (2 * LUT_SIZE))) * 65536.0)
    return QuarterWaveLut(np.minimum(raw, SAMPLE_MAX).astype(np.int64))


_DEFAULT_LUT: QuarterWaveLut | None = None


def default_lut() -> QuarterWaveLut:
    global _DEFAULT_LUT
    if _DEFAULT_LUT is None:
        _DEFAULT_LUT = build_lut()
    return _DEFAULT_LUT


def _to_q15(magnitude, negative):
    # Q0.16 -> Q1.15; +1.0 saturates to 0x7FFF, -1.0 is representable.
    m = shift_rne(magnitude, 1)
    return np.clip(np.where(negative, -m, m), Q15_MIN, Q15_MAX).astype(np.int16)


def sincos_q15(phase, lut: QuarterWaveLut | None = None):
    """Return (sin, cos) as Q1.15 codes for Q1.15 phase codes."""
    lut = lut or default_lut()
    u = np.asarray(phase, dtype=np.int64) & 0xFFFF
    quadrant = u >> (LUT_BITS + FRAC_BITS)
    off = u & (QUADRANT_SPAN - 1)
    a = lut.quarter_sine(off)
    b = lut.quarter_sine(QUADRANT_SPAN - off)
    # quadrant: 0 -> (a, b), 1 -> (b, -a), 2 -> (-a, -b), 3 -> (-b, a)
    odd = (quadrant & 1) == 1
    sin_mag = np.where(odd, b, a)
    cos_mag = np.where(odd, a, b)
    sin_neg = quadrant >= 2
    cos_neg = (quadrant == 1) | (quadrant == 2)
    s = _to_q15(sin_mag, sin_neg)
    c = _to_q15(cos_mag, cos_neg)
    if s.ndim == 0:
        return s[()], c[()]
    return s, c


def sincos_exact(theta):
    """Library-precision (sin, cos); the floating-point reference path."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    return np.sin(theta), np.cos(theta)


def lut_error_sweep(lut: QuarterWaveLut | None = None) -> dict:
    """Exhaustive comparison of ``sincos_q15`` against double precision.

    Errors are in normalized units (1.0 == full scale).
    """
    codes = np.arange(Q15_MIN, Q15_MAX + 1, dtype=np.int64)
    s, c = sincos_q15(codes, lut)
    sf = s / 32768.0
    cf = c / 32768.0
    theta = codes * (math.pi / 32768.0)
    es = np.abs(sf - np.sin(theta))
    ec = np.abs(cf - np.cos(theta))
    pyth = np.abs(sf * sf + cf * cf - 1.0)
    return {
        "max_sin_err": float(es.max()),
        "max_cos_err": float(ec.max()),
        "max_err": float(max(es.max(), ec.max())),
        "max_pythagorean": float(pyth.max()),
        "argmax_err": int(codes[np.argmax(np.maximum(es, ec))]),
    }


def read_lut_csv(path) -> QuarterWaveLut:
    rows = list(csv.DictReader(Path(path).open()))
    return QuarterWaveLut(np.array([int(r["value"]) for r in rows], dtype=np.int64))
