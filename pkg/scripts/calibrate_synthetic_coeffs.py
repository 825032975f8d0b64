"""Derive the bundled synthetic power/area coefficients.

The published per-configuration measurements are not available, only a few
anchors: four compute-only E_px values with their best-under-budget area
ranking, and the H20W5 power/area breakdown. These anchors are not mutually
consistent under a bilinear model, so both fits are approximate:

power  per-PE term fixed from the H20W5 breakdown; random search over the
       remaining non-negative coefficients minimizing the worst
       relative error across the four E_px points and the H20W5 power,
       restricted to models in which every budget pick beats all shapes it
       contains (required, since area grows with both dimensions).
area   per-PE term fixed likewise; linear program for the rest:
       non-negative coefficients, H20W5 area (accelerator
       plus SoC shell) within 10%, maximizing the margin by which the
       published best-under-budget picks hold.

Writes src/kurasim/data/synthetic_coeffs.txt and a noise-free 25-config
measurement CSV generated from it. The result is a synthetic stand-in.
"""

from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from kurasim.dse import (ModelCoefficients, DEFAULT_GRID, energy_px, pareto_frontier, power_total,
                         sweep, synthesize_measurements, write_measurements)
from kurasim.systolic import ArrayConfig

EPX_POINTS = {(10, 10): 258.5e-12, (15, 15): 195.4e-12, (20, 15): 178.1e-12, (25, 20): 166.0e-12}
H20W5_POWER = 54.12e-3
# per-PE terms from the H20W5 breakdown (PE array / 100 PEs)
P_HW = 20.08e-3 / 100
A_HW = 505_118.0 / 100
SOC_SHELL_AREA = 584_432.0 + 104_688.0 + 127_100.0 + 823_984.0
H20W5_AREA = 1_884_657.0 + SOC_SHELL_AREA
BUDGETS = {3e6: (10, 10), 4e6: (15, 15), 5e6: (20, 15), 6e6: (25, 20)}
CONFIGS = [(h, w) for h in DEFAULT_GRID for w in DEFAULT_GRID]

OUT = Path(__file__).resolve().parents[1] / "src" / "kurasim" / "data"


def epx(c, h, w):
    return energy_px(c, ArrayConfig(h, w))


def staircase_ok(c):
    for nh, nw in BUDGETS.values():
        e = epx(c, nh, nw)
        if any(epx(c, h, w) <= e for h, w in CONFIGS if h <= nh and w <= nw and (h, w) != (nh, nw)):
            return False
    return True


def fit_power(seed=0, iters=60_000):
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(iters):
        raw = np.concatenate([[P_HW], 10.0 ** rng.uniform([-6, -5, -5], [-2, -2, -1])])
        c = ModelCoefficients(*raw)
        if not staircase_ok(c):
            continue
        errs = [abs(epx(c, *k) / e - 1) for k, e in EPX_POINTS.items()]
        errs.append(abs(power_total(c, 20, 5) / H20W5_POWER - 1))
        if best is None or max(errs) < best[0]:
            best = (max(errs), raw)
    return best


def fit_area(p):
    """LP over (a_w, a_h, a_fixed, margin) with a_hw fixed."""
    c = ModelCoefficients(*p)
    row = lambda h, w: [h * w, w, h, 1.0]  # noqa: E731
    A_ub, b_ub = [], []
    for budget, (th, tw) in BUDGETS.items():
        A_ub.append(row(th, tw) + [1.0])  # A(target) + m <= budget
        b_ub.append(budget)
        e = epx(c, th, tw)
        for h, w in CONFIGS:
            if epx(c, h, w) < e:  # must be out of budget: A >= budget + m
                A_ub.append([-v for v in row(h, w)] + [1.0])
                b_ub.append(-budget)
    A_ub.append(row(20, 5) + [0.0])
    b_ub.append(1.1 * H20W5_AREA)
    A_ub.append([-v for v in row(20, 5)] + [0.0])
    b_ub.append(-0.9 * H20W5_AREA)
    res = linprog([0, 0, 0, 0, -1.0], A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                  bounds=[(A_HW, A_HW)] + [(0, None)] * 3 + [(None, None)], method="highs")
    if not res.success or res.x[4] <= 0:
        return None, None
    return res.x[:4], res.x[4]


def budget_picks(c):
    _, best = pareto_frontier(sweep(c), BUDGETS)
    return {b: (r.N_h, r.N_w) if r else None for b, r in best.items()}


def main():
    err, p = fit_power()
    print(f"power coeffs {p}  worst anchor error {err:.3f}")
    c = ModelCoefficients(*p)
    for (nh, nw), e in EPX_POINTS.items():
        print(f"  H{nh}W{nw}: {epx(c, nh, nw) * 1e12:.1f} pJ/px (published {e * 1e12:.1f})")
    print(f"  H20W5 power {power_total(c, 20, 5) * 1e3:.2f} mW (published {H20W5_POWER * 1e3:.2f})")
    a, margin = fit_area(p)
    if a is None:
        raise SystemExit("no non-negative area model reproduces the budget picks")
    c = ModelCoefficients(*(float(v) for v in p), *(float(v) for v in a))
    print(f"area coeffs {a}  margin {margin:.0f} um^2")
    picks = budget_picks(c)
    print("picks", picks)
    assert picks == BUDGETS
    header = ("# Synthetic coefficients, NOT published fitted values.\n"
              "# Generated by scripts/calibrate_synthetic_coeffs.py. Power in W, area in um^2.\n")
    (OUT / "synthetic_coeffs.txt").write_text(header + c.to_text())
    write_measurements(synthesize_measurements(c, DEFAULT_GRID), OUT / "synthetic_measurements.csv")


if __name__ == "__main__":
    main()
