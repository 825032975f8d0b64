"""End-to-end verification suite behind ``kurasim selftest``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import dse
from .drift import Boundary, DriftParams, QuantizedParams, drift_direct, drift_fixed, drift_reformulated
from .fixedpoint import random_phase_map
from .sampler import Schedule, run_trajectory, striped_map
from .systolic import ArrayConfig, run_image
from .trig import lut_error_sweep


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_reformulation(n_maps: int = 100, seed: int = 1, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    modes = list(Boundary)
    worst = 0.0
    for k in range(n_maps):
        if k == 0:
            h = w = 1
        elif k == 1:
            h = w = 96
        else:
            h, w = (int(v) for v in rng.integers(1, 97, size=2))
        pmap = random_phase_map(h, w, seed * 1000 + k)
        params = DriftParams(K=float(rng.uniform(0, 5)), K_ref=float(rng.uniform(0, 2)),
                             psi_ref=float(rng.uniform(-math.pi, math.pi)))
        b = modes[k % len(modes)]
        d = drift_direct(pmap, params, b).data
        r = drift_reformulated(pmap, params, b).data
        worst = max(worst, float(np.abs(d - r).max()))
    return CheckResult("1 reformulation identity", worst <= tol, f"max |direct - reformulated| = {worst:.3e}")


def default_qparams() -> QuantizedParams:
    return QuantizedParams.from_params(DriftParams(K=2.0, K_ref=0.5, psi_ref=0.7))


def check_cycles(grid=dse.DEFAULT_GRID, size: int = 96, ctile_offset: int = 0, results=None) -> CheckResult:
    """``ctile_offset`` perturbs the analytical model (mutation testing)."""
    pmap = random_phase_map(size, size, 2026)
    qp = default_qparams()
    failures = []
    h20w5_total = None
    for nh in grid:
        for nw in grid:
            cfg = ArrayConfig(nh, nw)
            res = run_image(pmap, cfg, qp)
            if results is not None:
                results[(nh, nw)] = res
            expect = dse.cycles_per_tile(nw, cfg.M) + ctile_offset
            bad = [c for c in res.trace.per_tile_cycles if c != expect]
            if bad:
                failures.append(f"{cfg.name}: {bad[0]} != {expect}")
            if res.trace.total_cycles != len(res.plan.tiles) * expect:
                failures.append(f"{cfg.name}: total {res.trace.total_cycles} != {len(res.plan.tiles)} x {expect}")
            if (nh, nw) == (20, 5):
                h20w5_total = res.trace.total_cycles
    if size == 96 and h20w5_total is not None and h20w5_total != 3100:
        failures.append(f"H20W5 total {h20w5_total} != 3100")
    ok = not failures
    detail = "all per-tile counts == N_w + 26" if ok else "; ".join(failures[:5])
    if h20w5_total is not None:
        detail += f"; H20W5 total = {h20w5_total}"
    return CheckResult("2 cycle exactness", ok, detail)


def check_bit_exact(maps=None, grid=dse.DEFAULT_GRID, precomputed=None) -> CheckResult:
    """run_image vs drift_fixed, raw-for-raw. ``precomputed`` maps (nh, nw) to
    run_image results for the first map."""
    qp = default_qparams()
    if maps is None:
        maps = [random_phase_map(96, 96, 2026)] + [
            random_phase_map(h, w, 300 + k) for k, (h, w) in enumerate([(37, 53), (41, 29), (23, 61), (30, 30)])]
    mism = []
    for mi, pmap in enumerate(maps):
        ref = drift_fixed(pmap, qp)
        for nh in grid:
            for nw in grid:
                if mi == 0 and precomputed and (nh, nw) in precomputed:
                    got = precomputed[(nh, nw)].fixed
                else:
                    got = run_image(pmap, ArrayConfig(nh, nw), qp).fixed
                if not (np.array_equal(got.drift.data, ref.drift.data) and np.array_equal(got.core, ref.core)
                        and np.array_equal(got.sin_c, ref.sin_c) and np.array_equal(got.cos_c, ref.cos_c)):
                    mism.append(f"map{mi} H{nh}W{nw}")
    n = len(maps) * len(grid) ** 2
    return CheckResult("3 engine bit-exactness", not mism,
                       f"{n - len(mism)}/{n} runs identical" + (f"; first mismatch {mism[0]}" if mism else ""))


def check_lut() -> CheckResult:
    s = lut_error_sweep()
    ok = s["max_err"] <= 2.0 ** -12 and s["max_pythagorean"] <= 2.0 ** -10
    return CheckResult("4 LUT fidelity", ok,
                       f"max err {s['max_err']:.3e} (<= {2.0**-12:.3e}), pythagorean {s['max_pythagorean']:.3e}")


def _fit_coeffs_truth():
    return dse.ModelCoefficients(2.0e-4, 1.5e-3, 1.2e-3, 1.4e-2, 5.0e3, 2.4e4, 4.9e4, 1.6e6)


def check_fit(seed: int = 5) -> CheckResult:
    truth = _fit_coeffs_truth()
    exact, _, _ = dse.fit_coefficients(dse.synthesize_measurements(truth))
    rel = max(abs(getattr(exact, f) / getattr(truth, f) - 1)
              for f in ("p_hw", "p_w", "p_h", "p_fixed", "a_hw", "a_w", "a_h", "a_fixed"))
    _, r2p, r2a = dse.fit_coefficients(dse.synthesize_measurements(truth, noise=1e-3, seed=seed))
    ok = rel <= 1e-9 and r2p > 0.999 and r2a > 0.999
    return CheckResult("5 model fit quality", ok,
                       f"noise-free rel err {rel:.2e}; noisy R2 power {r2p:.6f}, area {r2a:.6f}")


def continuous_min_width(c: dse.ModelCoefficients, nh: int, hi: float, M: int = 5,
                         xtol: float = 1e-9) -> float:
    """Golden-section minimizer of P_total * C_tile / (N_h N_w) over real N_w.

    Energies are compared in exact rational arithmetic; in floating point the
    minimum is too flat to locate to better than ~1e-8 relative.
    """
    coef = [Fraction(v) for v in (c.p_hw, c.p_w, c.p_h, c.p_fixed)]
    m2 = M * M + 1

    def f(x: float) -> Fraction:
        q = Fraction(x)
        p = coef[0] * nh * q + coef[1] * q + coef[2] * nh + coef[3]
        return p * (q + m2) / (nh * q)

    inv = (math.sqrt(5) - 1) / 2
    a, b = 1e-6, hi
    x1, x2 = b - inv * (b - a), a + inv * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > xtol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = f(x2)
    return (a + b) / 2


def _random_coeffs(rng, positive=True):
    lo = 1e-3 if positive else 0.0
    v = rng.uniform(lo, 1.0, size=4) * 10.0 ** rng.uniform(-2, 0, size=4)
    if not positive:
        v[rng.random(4) < 0.25] = 0.0
    return dse.ModelCoefficients(*v)


def check_optimal_width(draws: int = 1000, seed: int = 6, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_cont = 0.0
    int_fail = []
    for k in range(draws):
        c = _random_coeffs(rng)
        nh = int(rng.integers(1, 41))
        star = dse.optimal_width(c, nh)
        x = continuous_min_width(c, nh, hi=max(400.0, 4 * star))
        worst_cont = max(worst_cont, abs(x - star))
        widths = np.arange(1, 201)
        e = [dse.energy_px(c, ArrayConfig(nh, int(w))) for w in widths]
        best = int(widths[int(np.argmin(e))])
        s = min(max(star, 1.0), 200.0)
        allowed = set(range(math.floor(s) - 1, math.ceil(s) + 2))
        if best not in allowed:
            int_fail.append((k, best, star))
    ok = worst_cont <= tol and not int_fail
    return CheckResult("6 optimal width", ok,
                       f"max |numeric - closed form| = {worst_cont:.2e}; integer misses {len(int_fail)}")


def check_structure(steps: int = 50, seed: int = 7) -> CheckResult:
    sched = Schedule()
    img = striped_map(96, 96, period=16, phases=(0.0, math.pi / 2))
    kur = run_trajectory(img, sched, seed, steps=steps, drift="kuramoto")
    triv = run_trajectory(img, sched, seed, steps=steps, drift="trivial")
    diffs = [a[2] - b[2] for a, b in zip(kur.coherence[1:], triv.coherence[1:])]
    ok = all(d > 0 for d in diffs)
    return CheckResult("8 structure preservation", ok,
                       f"kuramoto > trivial at {sum(d > 0 for d in diffs)}/{len(diffs)} steps; "
                       f"min margin {min(diffs):.2e}")


def check_epx_shape(draws: int = 1000, seed: int = 9) -> CheckResult:
    rng = np.random.default_rng(seed)
    mono_fail = conv_fail = 0
    nh_vals = np.arange(1, 41)
    nw_vals = np.arange(1, 201)
    for _ in range(draws):
        c = _random_coeffs(rng, positive=False)
        nw = int(rng.integers(1, 61))
        if c.p_w + c.p_fixed / nw > 0:
            e = np.array([dse.energy_px(c, ArrayConfig(int(h), nw)) for h in nh_vals])
            if not np.all(np.diff(e) < 0):
                mono_fail += 1
        cp = _random_coeffs(rng, positive=True)
        nh = int(rng.integers(1, 41))
        e = np.array([dse.energy_px(cp, ArrayConfig(nh, int(w))) for w in nw_vals])
        d = np.sign(np.diff(e))
        d = d[d != 0]
        # unimodal: signs go - ... - + ... + at most once
        if np.any(np.diff(d) < 0):
            conv_fail += 1
    ok = mono_fail == 0 and conv_fail == 0
    return CheckResult("9 E_px monotonicity/convexity", ok,
                       f"monotonicity violations {mono_fail}, unimodality violations {conv_fail}")


def check_ratios(rel: float = 5e-3) -> CheckResult:
    sp, er, pr = dse.baseline_ratios(dse.ROCKET_LATENCY_S, dse.ROCKET_POWER_W,
                                     dse.H20W5_LATENCY_S, dse.H20W5_POWER_W)
    epx = dse.system_epx(dse.H20W5_LATENCY_S, dse.H20W5_POWER_W, dse.IMAGE_PIXELS)
    jet = dse.JETSON_EPX_J / 5.88e-9
    pairs = [(sp, 192.99), (er, 69.39), (pr, 2.78), (epx, 5.88e-9), (jet, 46.02)]
    ok = all(abs(a / b - 1) <= rel for a, b in pairs)
    return CheckResult("7 published ratio arithmetic", ok,
                       f"speedup {sp:.2f}, energy {er:.2f}, power {pr:.3f}, E_px {epx * 1e9:.3f} nJ, "
                       f"Jetson {jet:.2f}")


def run_all(ctile_offset: int = 0, printer=print) -> list[CheckResult]:
    results = []
    cache = {}

    def timed(fn, *a, **kw):
        t0 = time.perf_counter()
        r = fn(*a, **kw)
        r.seconds = time.perf_counter() - t0
        results.append(r)
        printer(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<32} {r.seconds:6.2f}s  {r.detail}")
        return r

    timed(check_reformulation)
    timed(check_cycles, ctile_offset=ctile_offset, results=cache)
    timed(check_bit_exact, precomputed=cache)
    timed(check_lut)
    timed(check_fit)
    timed(check_optimal_width)
    timed(check_ratios)
    timed(check_structure)
    timed(check_epx_shape)
    return results
