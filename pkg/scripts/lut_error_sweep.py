"""Exhaustive sin/cos table error sweep; writes per-code errors to CSV."""

import argparse
import csv
import math

import numpy as np

from kurasim.trig import lut_error_sweep, sincos_q15

ap = argparse.ArgumentParser()
ap.add_argument("--output", default="lut_errors.csv")
args = ap.parse_args()

codes = np.arange(-32768, 32768)
s, c = sincos_q15(codes)
theta = codes * math.pi / 32768
es = s / 32768 - np.sin(theta)
ec = c / 32768 - np.cos(theta)
with open(args.output, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["code", "sin_q15", "cos_q15", "sin_err", "cos_err"])
    for row in zip(codes.tolist(), s.tolist(), c.tolist(), es.tolist(), ec.tolist()):
        w.writerow(row)

summary = lut_error_sweep()
for k, v in summary.items():
    print(f"{k:>16}: {v}")
print(f"bound 2^-12 = {2.0 ** -12:.3e}, 2^-10 = {2.0 ** -10:.3e}")
