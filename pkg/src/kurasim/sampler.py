"""Euler-Maruyama Kuramoto orientation diffusion over phase maps.

Noise is drawn in raster order, one standard normal per pixel per step,
regardless of the drift engine, so runs with different engines can be
compared pixel-for-pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fixedpoint as fx
from .drift import Boundary, DriftParams, QuantizedParams, drift_fixed, drift_reformulated
from .fixedpoint import PhaseMap
from .io import FormatError, read_kv
from .noise import NoiseStream
from .systolic import ArrayConfig, PostArrayDatapath, run_image

ENGINES = ("oracle", "fixed", "systolic")


class ScheduleError(ValueError):
    pass


def _parse_table(text: str):
    pts = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ScheduleError(f"table entry {item!r} is not 't:value'")
        t, v = item.split(":", 1)
        pts.append((float(t), float(v)))
    return tuple(pts)


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear K(t), K_ref(t), D(t) over normalized time t in [0, 1].

    The defaults are placeholder ramps, not a reproduction of any published
    noise schedule.
    """

    K: tuple = ((0.0, 1.0), (1.0, 0.0))
    K_ref: tuple = ((0.0, 0.0), (1.0, 1.0))
    D: tuple = ((0.0, 0.1), (1.0, 0.1))
    dt: float = 0.01
    steps: int = 100
    psi_ref: float = 0.0
    beta: float = 0.2  # trivial baseline; 2*D keeps its stationary variance at 1
    M: int = 5

    def __post_init__(self):
        for name in ("K", "K_ref", "D"):
            tab = getattr(self, name)
            if not tab:
                raise ScheduleError(f"{name} table is empty")
            ts = [t for t, _ in tab]
            if ts != sorted(ts):
                raise ScheduleError(f"{name} table must be sorted by t")
            if not all(math.isfinite(t) and math.isfinite(v) for t, v in tab):
                raise ScheduleError(f"{name} table has non-finite entries")
        if any(v < 0 for _, v in self.D):
            raise ScheduleError("D(t) must be non-negative")
        if any(v < 0 for _, v in self.K) or any(v < 0 for _, v in self.K_ref):
            raise ScheduleError("K(t) and K_ref(t) must be non-negative")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ScheduleError("dt must be positive")
        if self.steps < 0:
            raise ScheduleError("steps must be >= 0")
        if self.M < 3 or self.M % 2 == 0:
            raise ScheduleError("M must be odd and >= 3")

    @staticmethod
    def _interp(tab, t):
        ts = [p[0] for p in tab]
        vs = [p[1] for p in tab]
        return float(np.interp(t, ts, vs))

    def at(self, t: float):
        """(K, K_ref, D) at normalized time t."""
        return self._interp(self.K, t), self._interp(self.K_ref, t), self._interp(self.D, t)

    def params(self, t: float) -> DriftParams:
        K, K_ref, _ = self.at(t)
        return DriftParams(K, K_ref, self.psi_ref, self.M)

    def time_of(self, step: int, direction: str = "forward") -> float:
        frac = step / self.steps if self.steps else 0.0
        return frac if direction == "forward" else 1.0 - frac

    @classmethod
    def from_file(cls, path) -> "Schedule":
        try:
            kv = read_kv(path)
        except OSError as e:
            raise FormatError(f"cannot read schedule {path}: {e}") from None
        known = {"K", "K_ref", "D", "dt", "steps", "psi_ref", "beta", "M"}
        unknown = set(kv) - known
        if unknown:
            raise ScheduleError(f"unknown schedule keys: {sorted(unknown)}")
        args = {}
        try:
            for k in ("K", "K_ref", "D"):
                if k in kv:
                    args[k] = _parse_table(kv[k])
            for k in ("dt", "psi_ref", "beta"):
                if k in kv:
                    args[k] = float(kv[k])
            for k in ("steps", "M"):
                if k in kv:
                    args[k] = int(kv[k])
        except ValueError as e:
            raise ScheduleError(str(e)) from None
        return cls(**args)

    def to_text(self) -> str:
        tab = lambda t: ", ".join(f"{a!r}:{b!r}" for a, b in t)  # noqa: E731
        return (f"K = {tab(self.K)}\nK_ref = {tab(self.K_ref)}\nD = {tab(self.D)}\n"
                f"dt = {self.dt!r}\nsteps = {self.steps}\npsi_ref = {self.psi_ref!r}\n"
                f"beta = {self.beta!r}\nM = {self.M}\n")


def _drift_step(pmap: PhaseMap, params: DriftParams, dt: float, D: float, xi: np.ndarray,
                engine: str, boundary, config: ArrayConfig | None, score=None) -> PhaseMap:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "systolic":
        if config is None:
            raise ValueError("the systolic engine needs an ArrayConfig")
        if config.M != params.M:
            raise ValueError(f"array M={config.M} does not match schedule M={params.M}")
    elif config is not None:
        raise ValueError(f"an ArrayConfig was given but engine is {engine!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if score is not None:
        score = np.asarray(score, dtype=np.float64)
        if score.shape != pmap.data.shape:
            raise ValueError(f"score field shape {score.shape} != map shape {pmap.data.shape}")

    if engine == "oracle":
        u = drift_reformulated(pmap, params, boundary).data
        if score is not None:
            u = u + score
        theta = pmap.radians() + u * dt + math.sqrt(2.0 * D * dt) * xi
        return PhaseMap(fx.encode_phase(theta))

    qp = QuantizedParams.from_params(params)
    if engine == "fixed":
        u = drift_fixed(pmap, qp, boundary).drift.data
    else:
        u = run_image(pmap, config, qp, boundary).fixed.drift.data
    new = PostArrayDatapath(qp).update(pmap.data, u, dt, D, xi, score)
    return PhaseMap(new)


def forward_step(pmap: PhaseMap, schedule: Schedule, t: float, noise: NoiseStream,
                 engine: str = "oracle", boundary=Boundary.REPLICATE,
                 config: ArrayConfig | None = None) -> PhaseMap:
    """theta' = wrap(theta + u(theta, t) dt + sqrt(2 D(t) dt) xi)."""
    xi = noise.normals(pmap.data.shape)
    _, _, D = schedule.at(t)
    return _drift_step(pmap, schedule.params(t), schedule.dt, D, xi, engine, boundary, config)


ScoreHook = Callable[[PhaseMap, float], np.ndarray]


def reverse_step(pmap: PhaseMap, schedule: Schedule, t: float, noise: NoiseStream,
                 score_hook: ScoreHook | None = None, engine: str = "oracle",
                 boundary=Boundary.REPLICATE, config: ArrayConfig | None = None) -> PhaseMap:
    """Like :func:`forward_step` with an external score field added to the drift.

    ``score_hook(pmap, t)`` returns a per-pixel real field in rad/unit time;
    no hook means a zero score.
    """
    score = None if score_hook is None else score_hook(pmap, t)
    xi = noise.normals(pmap.data.shape)
    _, _, D = schedule.at(t)
    return _drift_step(pmap, schedule.params(t), schedule.dt, D, xi, engine, boundary, config, score)


def trivial_drift_step(pmap: PhaseMap, beta: float, D: float, dt: float, noise: NoiseStream) -> PhaseMap:
    """Linear-contraction baseline: theta' = wrap(theta - beta/2 theta dt + sqrt(2 D dt) xi)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = noise.normals(pmap.data.shape)
    theta = pmap.radians()
    theta = theta - 0.5 * beta * theta * dt + math.sqrt(2.0 * D * dt) * xi
    return PhaseMap(fx.encode_phase(theta))


def local_coherence(pmap: PhaseMap, M: int = 5, boundary=Boundary.REPLICATE) -> float:
    """Mean local order parameter |sum_j exp(i theta_j)| / M^2 (center included)."""
    from .drift import pad_codes

    h = M // 2
    H, W = pmap.height, pmap.width
    pad = fx.decode_phase(pad_codes(pmap.data, h, h, h, h, boundary))
    z = np.exp(1j * pad)
    acc = np.zeros((H, W), dtype=np.complex128)
    for dy in range(M):
        for dx in range(M):
            acc += z[dy:dy + H, dx:dx + W]
    return float(np.mean(np.abs(acc)) / (M * M))


def striped_map(height: int = 96, width: int = 96, period: int = 16,
                phases=(0.0, math.pi), orientation: str = "vertical") -> PhaseMap:
    """Bands of constant phase, ``period // 2`` pixels wide."""
    idx = np.arange(width if orientation == "vertical" else height)
    band = (idx // max(1, period // 2)) % len(phases)
    vals = np.asarray(phases, dtype=np.float64)[band]
    theta = np.broadcast_to(vals, (height, width)) if orientation == "vertical" \
        else np.broadcast_to(vals[:, None], (height, width))
    return PhaseMap.from_radians(np.array(theta))


@dataclass
class Trajectory:
    coherence: list = field(default_factory=list)  # (step, t, coherence)
    final: PhaseMap | None = None


def run_trajectory(initial: PhaseMap, schedule: Schedule, seed: int, steps: int | None = None,
                   direction: str = "forward", drift: str = "kuramoto", engine: str = "oracle",
                   boundary=Boundary.REPLICATE, config: ArrayConfig | None = None,
                   score_hook: ScoreHook | None = None, on_step=None) -> Trajectory:
    """Integrate ``steps`` steps; records coherence before the first and after each step.

    ``drift`` is "kuramoto" or "trivial"; ``on_step(k, pmap)`` is called for
    the initial map (k = 0) and after each step.
    """
    if direction not in ("forward", "reverse"):
        raise ValueError("direction must be 'forward' or 'reverse'")
    if drift not in ("kuramoto", "trivial"):
        raise ValueError("drift must be 'kuramoto' or 'trivial'")
    steps = schedule.steps if steps is None else steps
    noise = NoiseStream(seed)
    pmap = initial
    traj = Trajectory()
    traj.coherence.append((0, schedule.time_of(0, direction), local_coherence(pmap, schedule.M, boundary)))
    if on_step:
        on_step(0, pmap)
    for k in range(steps):
        t = schedule.time_of(k, direction)
        if drift == "trivial":
            _, _, D = schedule.at(t)
            pmap = trivial_drift_step(pmap, schedule.beta, D, schedule.dt, noise)
        elif direction == "forward":
            pmap = forward_step(pmap, schedule, t, noise, engine, boundary, config)
        else:
            pmap = reverse_step(pmap, schedule, t, noise, score_hook, engine, boundary, config)
        traj.coherence.append((k + 1, schedule.time_of(k + 1, direction),
                               local_coherence(pmap, schedule.M, boundary)))
        if on_step:
            on_step(k + 1, pmap)
    traj.final = pmap
    return traj
