"""Simulated vs analytical cycle counts for the 5x5 grid of array shapes on a 96x96 map."""

import argparse
import csv
import time

from kurasim.drift import DriftParams, QuantizedParams
from kurasim.dse import DEFAULT_GRID, cycles_per_tile
from kurasim.fixedpoint import random_phase_map
from kurasim.systolic import ArrayConfig, run_image

ap = argparse.ArgumentParser()
ap.add_argument("--size", type=int, default=96)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--output", default="cycle_table.csv")
args = ap.parse_args()

pmap = random_phase_map(args.size, args.size, args.seed)
qp = QuantizedParams.from_params(DriftParams(K=2.0, K_ref=0.5))
rows = []
for nh in DEFAULT_GRID:
    for nw in DEFAULT_GRID:
        cfg = ArrayConfig(nh, nw)
        t0 = time.perf_counter()
        res = run_image(pmap, cfg, qp)
        wall = time.perf_counter() - t0
        per = sorted(set(res.trace.per_tile_cycles))
        rows.append([cfg.name, len(res.plan.tiles), cycles_per_tile(nw), "/".join(map(str, per)),
                     res.trace.total_cycles, f"{res.trace.seconds(cfg.f_clk) * 1e6:.2f}", f"{wall:.3f}"])
        print(f"{cfg.name:>7}  tiles {len(res.plan.tiles):4d}  model {cycles_per_tile(nw):3d}  "
              f"simulated {'/'.join(map(str, per)):>5}  total {res.trace.total_cycles:6d}")

with open(args.output, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["config", "tiles", "model_ctile", "sim_ctile", "total_cycles", "latency_us", "wall_s"])
    w.writerows(rows)
