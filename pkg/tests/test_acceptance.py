"""Acceptance criteria, one test each, at the stated tolerances."""

import subprocess
import sys
import time

import pytest

from conftest import ACCEPTANCE_RESULTS
from kurasim import dse, selftest


def record(num, name, passed, detail):
    ACCEPTANCE_RESULTS.append((num, name, passed, detail))
    print(f"criterion {num}: {'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, detail


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    r = fn(*a, **kw)
    return r, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cycle_runs():
    cache = {}
    r, dt = timed(selftest.check_cycles, results=cache)
    return r, dt, cache


def test_criterion_01_reformulation_identity():
    r, dt = timed(selftest.check_reformulation, n_maps=100, tol=1e-12)
    record(1, "reformulation identity", r.passed and dt < 10, f"{r.detail}; {dt:.2f} s (< 10 s)")


def test_criterion_02_cycle_exactness(cycle_runs):
    r, dt, _ = cycle_runs
    record(2, "cycle exactness", r.passed and dt < 30, f"{r.detail}; {dt:.2f} s (< 30 s)")


def test_criterion_03_engine_bit_exactness(cycle_runs):
    _, _, cache = cycle_runs
    r = selftest.check_bit_exact(precomputed=cache)
    record(3, "engine bit-exactness", r.passed, r.detail)


def test_criterion_04_lut_fidelity():
    r, dt = timed(selftest.check_lut)
    record(4, "LUT fidelity", r.passed and dt < 5, f"{r.detail}; {dt:.2f} s (< 5 s)")


def test_criterion_05_model_fit_quality():
    r = selftest.check_fit()
    record(5, "model fit quality", r.passed, r.detail)


def test_criterion_06_optimal_width():
    r = selftest.check_optimal_width(draws=1000, tol=1e-6)
    record(6, "optimal width", r.passed, r.detail)


def test_criterion_07_published_ratios():
    sp, er, pr = dse.baseline_ratios(123.8e-3, 30.38e-3, 641.3e-6, 84.5e-3)
    epx = dse.system_epx(641.3e-6, 84.5e-3, 9216)
    jet = 270.57 / 5.88
    checks = [(sp, 192.99), (er, 69.39), (pr, 2.78), (epx, 5.88e-9), (jet, 46.02)]
    worst = max(abs(a / b - 1) for a, b in checks)
    record(7, "published ratio arithmetic", worst <= 5e-3,
           f"speedup {sp:.2f}, energy {er:.2f}, power {pr:.3f}, E_px {epx * 1e9:.3f} nJ, "
           f"Jetson {jet:.2f}; worst rel dev {worst:.2e} (<= 5e-3)")


def test_criterion_08_structure_preservation():
    r, dt = timed(selftest.check_structure, steps=50)
    record(8, "structure preservation", r.passed and dt < 20, f"{r.detail}; {dt:.2f} s (< 20 s)")


def test_criterion_09_epx_shape():
    r = selftest.check_epx_shape(draws=1000)
    record(9, "E_px monotonicity and convexity", r.passed, r.detail)


def test_criterion_10_selftest_command():
    t0 = time.perf_counter()
    p = subprocess.run([sys.executable, "-m", "kurasim.cli", "selftest"], capture_output=True, text=True)
    dt = time.perf_counter() - t0
    names = ["1 ", "2 ", "3 ", "4 ", "5 ", "6 ", "8 ", "9 "]
    ran = all(any(line.startswith("PASS") and f"  {n}" in line for line in p.stdout.splitlines())
              for n in names)
    record(10, "selftest command", p.returncode == 0 and ran and dt < 60,
           f"exit {p.returncode}, criteria 1-6 and 8-9 passed: {ran}; {dt:.1f} s (< 60 s)")
