"""Fixed-point formats shared by the LUT, the drift kernels and the array model.

Two formats are used throughout:

* Q1.15 (int16) for phases and sin/cos samples. A phase code ``raw`` stands
  for the angle ``raw * pi / 2**15``, so the full int16 range covers
  ``[-pi, pi)`` and two's-complement wraparound *is* phase wraparound.
* Q8.24 (int32) for accumulators: neighborhood sums, the combined core and
  the scaled drift. Additions saturate instead of wrapping.

Rounding is round-to-nearest-even everywhere. Functions accept Python ints
or numpy integer arrays and return numpy values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Q15_FRAC = 15
Q15_ONE = 1 << Q15_FRAC
Q15_MIN = -(1 << 15)
Q15_MAX = (1 << 15) - 1

ACC_FRAC = 24
ACC_ONE = 1 << ACC_FRAC
ACC_MIN = -(1 << 31)
ACC_MAX = (1 << 31) - 1

# Resolution of one phase code in radians.
PHASE_ULP = math.pi / Q15_ONE


class InvalidPhaseError(ValueError):
    """Raised for NaN or infinite phase inputs."""


class SaturationCounter:
    """Sticky saturation flag plus an event count.

    Pass one instance through a computation to find out whether (and how
    often) any accumulator clamped.
    """

    def __init__(self) -> None:
        self.count = 0

    @property
    def flagged(self) -> bool:
        return self.count > 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def __repr__(self) -> str:
        return f"SaturationCounter(count={self.count})"


def shift_rne(x, n: int):
    """Arithmetic right shift by ``n`` bits with round-half-to-even."""
    x = np.asarray(x, dtype=np.int64)
    if n <= 0:
        return x << -n
    q = x >> n
    r = x & ((1 << n) - 1)
    half = 1 << (n - 1)
    return q + ((r > half) | ((r == half) & ((q & 1) == 1)))


def wrap_phase(theta):
    """Wrap radians into ``[-pi, pi)``."""
    theta = np.asarray(theta, dtype=np.float64)
    return theta - 2.0 * math.pi * np.floor((theta + math.pi) / (2.0 * math.pi))


def wrap_q15(raw):
    """Reduce integer phase codes modulo 2**16 into int16."""
    return (np.asarray(raw, dtype=np.int64) & 0xFFFF).astype(np.uint16).view(np.int16)


def encode_phase(theta):
    """Radians -> Q1.15 phase code (wrapped, rounded half-to-even)."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise InvalidPhaseError("phase must be finite")
    scaled = np.rint(wrap_phase(theta) * (Q15_ONE / math.pi))
    # pi - tiny can round up to +32768, which is the same angle as -32768
    out = wrap_q15(scaled.astype(np.int64))
    return out[()] if out.ndim == 0 else out


def decode_phase(raw):
    return np.asarray(raw, dtype=np.int64) * (math.pi / Q15_ONE)


def q15_from_float(x, counter: SaturationCounter | None = None):
    """Quantize a real in [-1, 1) to Q1.15 with saturation."""
    return _quantize(x, Q15_FRAC, Q15_MIN, Q15_MAX, counter).astype(np.int16)


def acc_from_float(x, counter: SaturationCounter | None = None):
    """Quantize a real to Q8.24 with saturation."""
    return _quantize(x, ACC_FRAC, ACC_MIN, ACC_MAX, counter).astype(np.int32)


def _quantize(x, frac, lo, hi, counter):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite value")
    raw = np.rint(x * float(1 << frac))
    clipped = np.clip(raw, lo, hi)
    if counter is not None:
        counter.add(np.count_nonzero(clipped != raw))
    return clipped.astype(np.int64)


def acc_to_float(raw):
    return np.asarray(raw, dtype=np.int64) / float(ACC_ONE)


def q15_to_acc(raw):
    """Widen Q1.15 to Q8.24 (exact)."""
    return np.asarray(raw, dtype=np.int64).astype(np.int32) << (ACC_FRAC - Q15_FRAC)


def saturate_acc(x, counter: SaturationCounter | None = None):
    x = np.asarray(x, dtype=np.int64)
    out = np.clip(x, ACC_MIN, ACC_MAX)
    if counter is not None:
        counter.add(np.count_nonzero(out != x))
    return out.astype(np.int32)


def acc_add(a, b, counter: SaturationCounter | None = None):
    """Saturating Q8.24 addition."""
    s = np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)
    return saturate_acc(s, counter)


def acc_sub(a, b, counter: SaturationCounter | None = None):
    s = np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)
    return saturate_acc(s, counter)


def mul_q15(a, b):
    """Q1.15 x Q1.15 -> Q8.24.

    The exact Q2.30 product is shifted right by 6 with round-half-to-even.
    The result magnitude is at most 1.0, so no saturation is possible.
    """
    p = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    return shift_rne(p, 2 * Q15_FRAC - ACC_FRAC).astype(np.int32)


def mul_q15_acc(a, b, counter: SaturationCounter | None = None):
    """Q1.15 x Q8.24 -> Q8.24 (the PE multiply-subtract and scaling path)."""
    p = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    return saturate_acc(shift_rne(p, Q15_FRAC), counter)


def mul_acc_acc(a, b, frac_out: int, counter: SaturationCounter | None = None):
    """Q8.24 x Q8.24 product renormalized to ``frac_out`` fraction bits (int64)."""
    p = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    return shift_rne(p, 2 * ACC_FRAC - frac_out)


@dataclass(frozen=True)
class PhaseMap:
    """A height x width grid of Q1.15 phase codes (row-major, top-left origin)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"phase map must be a non-empty 2-D array, got shape {data.shape}")
        if data.dtype != np.int16:
            if not np.issubdtype(data.dtype, np.integer):
                raise TypeError("phase map data must be integer Q1.15 codes; use PhaseMap.from_radians")
            if data.min() < Q15_MIN or data.max() > Q15_MAX:
                raise ValueError("phase codes out of int16 range")
            data = data.astype(np.int16)
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_radians(cls, theta) -> "PhaseMap":
        return cls(encode_phase(np.atleast_2d(theta)))

    def radians(self) -> np.ndarray:
        return decode_phase(self.data)

    def __eq__(self, other):
        if not isinstance(other, PhaseMap):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))


def random_phase_map(height: int, width: int, seed: int) -> PhaseMap:
    """Uniformly random phase codes, for tests and experiments."""
    rng = np.random.default_rng(seed)
    return PhaseMap(rng.integers(Q15_MIN, Q15_MAX + 1, size=(height, width), dtype=np.int16))
