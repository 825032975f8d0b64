"""On-disk formats.

KPM1 phase map::

    0..3   b"KPM1"
    4..7   width, uint32 little-endian
    8..11  height, uint32 little-endian
    12..   width*height int16 LE Q1.15 codes, row-major, top-left origin

KDF1 drift field: same header with magic b"KDF1" and int32 LE Q8.24 values.

16-bit binary PGM (P5, maxval 65535) maps gray g to phase code g - 32768,
so gray 0 is -pi and gray 65535 is pi*(1 - 2**-15); the mapping is lossless.
"""

from __future__ import annotations

import csv
import hashlib
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .drift import DriftField
from .fixedpoint import PhaseMap, acc_from_float

KPM_MAGIC = b"KPM1"
KDF_MAGIC = b"KDF1"
_HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    """Malformed or truncated input file."""


@contextmanager
def atomic_path(path):
    """Yield a temp path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _pack(magic: bytes, data: np.ndarray, dtype: str) -> bytes:
    h, w = data.shape
    return _HEADER.pack(magic, w, h) + np.ascontiguousarray(data, dtype=dtype).tobytes()


def _unpack(buf: bytes, magic: bytes, dtype: str) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    got, w, h = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if w < 1 or h < 1:
        raise FormatError(f"invalid dimensions {w}x{h}")
    item = np.dtype(dtype).itemsize
    need = _HEADER.size + w * h * item
    if len(buf) < need:
        raise FormatError(f"truncated payload: {len(buf)} bytes, need {need}")
    return np.frombuffer(buf, dtype=dtype, count=w * h, offset=_HEADER.size).reshape(h, w).copy()


def kpm_bytes(pmap: PhaseMap) -> bytes:
    return _pack(KPM_MAGIC, pmap.data, "<i2")


def write_kpm(pmap: PhaseMap, path) -> None:
    atomic_write_bytes(path, kpm_bytes(pmap))


def read_kpm(path) -> PhaseMap:
    return PhaseMap(_unpack(Path(path).read_bytes(), KPM_MAGIC, "<i2").astype(np.int16))


def kdf_bytes(field: DriftField) -> bytes:
    data = field.data if field.is_fixed else acc_from_float(field.data)
    return _pack(KDF_MAGIC, data, "<i4")


def write_kdf(field: DriftField, path) -> None:
    """Raw Q8.24 dump; real-valued fields are quantized first."""
    atomic_write_bytes(path, kdf_bytes(field))


def read_kdf(path) -> DriftField:
    return DriftField(_unpack(Path(path).read_bytes(), KDF_MAGIC, "<i4").astype(np.int32))


def write_field_csv(field: DriftField, path) -> None:
    values = field.to_float()
    with atomic_path(path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for y in range(field.height):
            for x in range(field.width):
                w.writerow([x, y, repr(float(values[y, x]))])


def write_pgm(pmap: PhaseMap, path) -> None:
    gray = (pmap.data.astype(np.int32) + 32768).astype(">u2")
    header = f"P5\n{pmap.width} {pmap.height}\n65535\n".encode()
    atomic_write_bytes(path, header + gray.tobytes())


def read_pgm(path) -> PhaseMap:
    buf = Path(path).read_bytes()
    tokens = []
    pos = 0
    # magic, width, height, maxval; '#' comments allowed between tokens
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError("only binary PGM (P5) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"bad PGM header: {e}") from None
    if maxval != 65535:
        raise FormatError("phase PGM must be 16-bit (maxval 65535)")
    if len(buf) - pos < w * h * 2:
        raise FormatError("truncated PGM payload")
    gray = np.frombuffer(buf, dtype=">u2", count=w * h, offset=pos).reshape(h, w)
    return PhaseMap((gray.astype(np.int32) - 32768).astype(np.int16))


def read_phase_map(path) -> PhaseMap:
    """Read KPM1 or 16-bit PGM, chosen by magic bytes."""
    path = Path(path)
    try:
        head = path.open("rb").read(4)
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    if head == KPM_MAGIC:
        return read_kpm(path)
    if head[:2] == b"P5":
        return read_pgm(path)
    raise FormatError(f"{path}: not a KPM1 or PGM file")


def read_kv(path) -> dict[str, str]:
    """Flat ``key = value`` text with ``#`` comments."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise FormatError(f"{path}:{n}: empty key")
        out[k] = v
    return out
