"""Analytical design-space exploration for the drift array.

Cycle/throughput/energy models, bilinear power and area models with
least-squares fitting, the closed-form energy-optimal width, Pareto
extraction and baseline ratio arithmetic.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .systolic import ArrayConfig

DEFAULT_GRID = (5, 10, 15, 20, 25)

# Published measurements (96x96 drift kernel).
ROCKET_LATENCY_S = 123.8e-3
ROCKET_POWER_W = 30.38e-3
H20W5_LATENCY_S = 641.3e-6
H20W5_POWER_W = 84.5e-3
JETSON_EPX_J = 270.57e-9
IMAGE_PIXELS = 96 * 96


def cycles_per_tile(N_w: int, M: int = 5) -> int:
    if N_w < 1:
        raise ValueError("N_w must be >= 1")
    if M < 3 or M % 2 == 0:
        raise ValueError(f"M must be odd and >= 3, got {M}")
    return N_w + M * M + 1


def cycles_per_px(config: ArrayConfig) -> float:
    m2 = config.M * config.M
    return 1.0 / config.N_h + (m2 + 1) / (config.N_h * config.N_w)


def throughput_px(config: ArrayConfig) -> float:
    """Output pixels per second."""
    return config.f_clk * config.N_h * config.N_w / cycles_per_tile(config.N_w, config.M)


@dataclass(frozen=True)
class ModelCoefficients:
    """Bilinear power (W) and area (um^2) coefficients."""

    p_hw: float = 0.0
    p_w: float = 0.0
    p_h: float = 0.0
    p_fixed: float = 0.0
    a_hw: float = 0.0
    a_w: float = 0.0
    a_h: float = 0.0
    a_fixed: float = 0.0

    def negative_terms(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) < 0]

    @classmethod
    def from_file(cls, path) -> "ModelCoefficients":
        from .io import read_kv

        kv = read_kv(path)
        unknown = set(kv) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown coefficient keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in kv.items()})

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))


def power_total(c: ModelCoefficients, N_h: int, N_w: int) -> float:
    return c.p_hw * N_h * N_w + c.p_w * N_w + c.p_h * N_h + c.p_fixed


def area_total(c: ModelCoefficients, N_h: int, N_w: int) -> float:
    return c.a_hw * N_h * N_w + c.a_w * N_w + c.a_h * N_h + c.a_fixed


def energy_px(c: ModelCoefficients, config: ArrayConfig) -> float:
    """Compute-only energy per output pixel (J), expanded form."""
    nh, nw = config.N_h, config.N_w
    return (cycles_per_tile(nw, config.M) / config.f_clk
            * (c.p_hw + c.p_w / nh + c.p_h / nw + c.p_fixed / (nh * nw)))


def energy_px_direct(c: ModelCoefficients, config: ArrayConfig) -> float:
    """P_total * C_tile / (N_h N_w f_clk); algebraically equal to :func:`energy_px`."""
    nh, nw = config.N_h, config.N_w
    return power_total(c, nh, nw) * cycles_per_tile(nw, config.M) / (nh * nw * config.f_clk)


class UnboundedWidthError(ValueError):
    """p_hw + p_w / N_h == 0: energy keeps falling as the array widens."""


def optimal_width(c: ModelCoefficients, N_h: float, M: int = 5) -> float:
    den = c.p_hw + c.p_w / N_h
    if den <= 0:
        raise UnboundedWidthError("p_hw + p_w/N_h must be positive")
    return math.sqrt((M * M + 1) * (c.p_h + c.p_fixed / N_h) / den)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class MeasurementSample:
    N_h: int
    N_w: int
    power_w: float
    area_um2: float
    sys_latency_s: float | None = None
    sys_power_w: float | None = None

    def __post_init__(self):
        if self.N_h < 1 or self.N_w < 1:
            raise ValueError("N_h and N_w must be >= 1")
        if not (self.power_w > 0 and self.area_um2 > 0):
            raise ValueError(f"measurements must be positive (H{self.N_h}W{self.N_w})")


class RankDeficientError(ValueError):
    pass


def _solve_partial_pivot(A: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a small dense system."""
    A = A.astype(np.float64).copy()
    b = b.astype(np.float64).copy()
    n = len(b)
    scale = np.abs(A).max()
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= tol * scale:
            raise RankDeficientError(f"design matrix is rank deficient (pivot {k} ~ 0)")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


BASIS = ("hw", "w", "h", "fixed")


def design_matrix(samples) -> np.ndarray:
    return np.array([[s.N_h * s.N_w, s.N_w, s.N_h, 1.0] for s in samples], dtype=np.float64)


@dataclass
class FitResult:
    coefficients: tuple  # (c_hw, c_w, c_h, c_fixed)
    r2: float
    residuals: np.ndarray = field(repr=False)

    @property
    def negative(self) -> list[str]:
        return [name for name, v in zip(BASIS, self.coefficients) if v < 0]


def fit_bilinear(samples, target: str) -> FitResult:
    """Ordinary least squares on basis {N_h N_w, N_w, N_h, 1}.

    Solved through column-equilibrated normal equations.
    """
    if target not in ("power", "area"):
        raise ValueError("target must be 'power' or 'area'")
    samples = list(samples)
    if len(samples) < 4:
        raise RankDeficientError(f"need at least 4 samples for 4 coefficients, got {len(samples)}")
    X = design_matrix(samples)
    y = np.array([s.power_w if target == "power" else s.area_um2 for s in samples])
    if np.linalg.matrix_rank(X) < 4:
        raise RankDeficientError("design rows do not span {N_h N_w, N_w, N_h, 1}; vary both N_h and N_w")
    norms = np.sqrt((X * X).sum(axis=0))
    Xs = X / norms
    beta = _solve_partial_pivot(Xs.T @ Xs, Xs.T @ y) / norms
    resid = y - X @ beta
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(tuple(float(v) for v in beta), r2, resid)


def fit_coefficients(samples) -> tuple[ModelCoefficients, float, float]:
    """Fit both models; returns (coefficients, R2_power, R2_area)."""
    fp = fit_bilinear(samples, "power")
    fa = fit_bilinear(samples, "area")
    c = ModelCoefficients(*fp.coefficients, *fa.coefficients)
    return c, fp.r2, fa.r2


def synthesize_measurements(coeffs: ModelCoefficients, grid=DEFAULT_GRID, noise: float = 0.0,
                            seed: int = 0) -> list[MeasurementSample]:
    """Measurements generated from a model, optionally with multiplicative noise."""
    rng = np.random.default_rng(seed)
    out = []
    for nh in grid:
        for nw in grid:
            p = power_total(coeffs, nh, nw)
            a = area_total(coeffs, nh, nw)
            if noise:
                p *= 1.0 + noise * rng.standard_normal()
                a *= 1.0 + noise * rng.standard_normal()
            out.append(MeasurementSample(nh, nw, p, a))
    return out


# ---------------------------------------------------------------------------
# sweeps and Pareto


@dataclass
class SweepRecord:
    N_h: int
    N_w: int
    ctile: int
    cpx: float
    tpx: float
    power_w: float
    area_um2: float
    epx_j: float
    sys_epx_j: float | None = None
    frontier: bool = False


def sweep(coeffs: ModelCoefficients, grid_h=DEFAULT_GRID, grid_w=DEFAULT_GRID, M: int = 5,
          f_clk: float = 1e8, measurements=None, pixels: int = IMAGE_PIXELS,
          jobs: int = 1) -> list[SweepRecord]:
    """Evaluate the models over a grid. ``measurements`` (optional) supplies
    per-config system latency/power for the system-level overlay. Records
    come back in grid order regardless of ``jobs``."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    overlay = {}
    for s in measurements or ():
        if s.sys_latency_s is not None and s.sys_power_w is not None:
            overlay[(s.N_h, s.N_w)] = s

    def one(point):
        nh, nw = point
        cfg = ArrayConfig(nh, nw, M, f_clk)
        sys_e = None
        if (nh, nw) in overlay:
            s = overlay[(nh, nw)]
            sys_e = system_epx(s.sys_latency_s, s.sys_power_w, pixels)
        return SweepRecord(nh, nw, cycles_per_tile(nw, M), cycles_per_px(cfg), throughput_px(cfg),
                           power_total(coeffs, nh, nw), area_total(coeffs, nh, nw),
                           energy_px(coeffs, cfg), sys_e)

    points = [(nh, nw) for nh in grid_h for nw in grid_w]
    if jobs == 1 or len(points) < 2:
        return [one(p) for p in points]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, points))


def _key(r):
    # deterministic tie-break: smaller area, then smaller N_w, then smaller N_h
    return (r.epx_j, r.area_um2, r.N_w, r.N_h)


def pareto_frontier(records, budgets=()):
    """Mark non-dominated (area, E_px) records and pick the best per area budget.

    Returns ``(frontier, best)`` where ``best`` maps each budget to the
    minimum-E_px record with area <= budget, or None when nothing fits.
    """
    records = list(records)
    if not records:
        raise ValueError("empty configuration set")
    frontier = []
    for r in records:
        dominated = any(
            (o.area_um2 <= r.area_um2 and o.epx_j <= r.epx_j)
            and (o.area_um2 < r.area_um2 or o.epx_j < r.epx_j)
            for o in records)
        r.frontier = not dominated
        if r.frontier:
            frontier.append(r)
    frontier.sort(key=lambda r: (r.area_um2, r.epx_j))
    best = {}
    for b in budgets:
        feasible = [r for r in records if r.area_um2 <= b]
        best[b] = min(feasible, key=_key) if feasible else None
    return frontier, best


# ---------------------------------------------------------------------------
# baselines


def baseline_ratios(lat_a: float, pow_a: float, lat_b: float, pow_b: float):
    """(speedup, energy ratio, power ratio) of design b over baseline a."""
    for v in (lat_a, pow_a, lat_b, pow_b):
        if not v > 0:
            raise ValueError("latencies and powers must be positive")
    return lat_a / lat_b, (lat_a * pow_a) / (lat_b * pow_b), pow_b / pow_a


def system_epx(latency_s: float, power_w: float, pixels: int) -> float:
    if pixels <= 0:
        raise ValueError("pixel count must be positive")
    if not (latency_s > 0 and power_w > 0):
        raise ValueError("latency and power must be positive")
    return latency_s * power_w / pixels


# ---------------------------------------------------------------------------
# bundled data


DATA_DIR = Path(__file__).parent / "data"


def synthetic_coefficients() -> ModelCoefficients:
    """Synthetic coefficient set shipped with the package.

    NOT fitted to any published measurement set. Calibrated (see
    scripts/calibrate_synthetic_coeffs.py) so that the H20W5 power is near
    54 mW and best-under-budget picks grow with the budget.
    """
    return ModelCoefficients.from_file(DATA_DIR / "synthetic_coeffs.txt")


def read_measurements(path) -> list[MeasurementSample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"nh", "nw", "power_w", "area_um2"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"measurement CSV must have columns {sorted(need)}")
        out = []
        for row in reader:
            opt = lambda k: float(row[k]) if row.get(k) not in (None, "") else None  # noqa: E731
            out.append(MeasurementSample(int(row["nh"]), int(row["nw"]), float(row["power_w"]),
                                         float(row["area_um2"]), opt("sys_latency_s"), opt("sys_power_w")))
    return out


def write_measurements(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nh", "nw", "power_w", "area_um2"])
        for s in samples:
            w.writerow([s.N_h, s.N_w, repr(s.power_w), repr(s.area_um2)])


SWEEP_COLUMNS = ["nh", "nw", "ctile", "cpx", "tpx", "power_w", "area_um2", "epx_j"]


def write_sweep_csv(records, path, with_frontier: bool = True) -> None:
    has_sys = any(r.sys_epx_j is not None for r in records)
    cols = SWEEP_COLUMNS + (["sys_epx_j"] if has_sys else []) + (["frontier"] if with_frontier else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            row = [r.N_h, r.N_w, r.ctile, f"{r.cpx:.9g}", f"{r.tpx:.9g}", f"{r.power_w:.9g}",
                   f"{r.area_um2:.9g}", f"{r.epx_j:.9g}"]
            if has_sys:
                row.append("" if r.sys_epx_j is None else f"{r.sys_epx_j:.9g}")
            if with_frontier:
                row.append(int(r.frontier))
            w.writerow(row)
