"""``kurasim`` command-line front end.

Exit codes: 0 success, 1 verification failure, 2 I/O or format error,
3 parameter validation error.

Every artifact-producing command writes ``<output>.manifest.json`` (or
``manifest.json`` inside a snapshot directory) holding the argv, resolved
parameters, tool version and SHA-256 digests of inputs and outputs.
``kurasim replay MANIFEST`` re-executes it and checks the digests.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dse
from .drift import Boundary, DriftParams, QuantizedParams, drift_fixed, drift_reformulated
from .fixedpoint import PhaseMap, random_phase_map
from .io import (FormatError, atomic_path, atomic_write_bytes, read_kv, read_phase_map, sha256_file,
                 write_field_csv, write_kdf, write_kpm)
from .sampler import ENGINES, Schedule, ScheduleError, run_trajectory, striped_map
from .systolic import ArrayConfig, run_image

EXIT_OK, EXIT_VERIFY, EXIT_IO, EXIT_PARAM = 0, 1, 2, 3
MAX_DIM = 1024


class ParamError(ValueError):
    pass


class IOFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _load(fn, path, what):
    try:
        return fn(path)
    except (OSError, FormatError, ValueError, KeyError) as e:
        if isinstance(e, ScheduleError):
            raise
        raise IOFailure(f"{what} {path}: {e}") from None


def _params(args) -> DriftParams:
    vals = {"K": 1.0, "K_ref": 0.0, "psi_ref": 0.0, "M": 5}
    if args.params:
        kv = _load(read_kv, args.params, "params file")
        unknown = set(kv) - set(vals)
        if unknown:
            raise ParamError(f"unknown parameter keys: {sorted(unknown)}")
        for k, v in kv.items():
            try:
                vals[k] = int(v) if k == "M" else float(v)
            except ValueError:
                raise ParamError(f"bad value for {k}: {v!r}") from None
    for key, attr in (("K", "k"), ("K_ref", "k_ref"), ("psi_ref", "psi_ref"), ("M", "m")):
        v = getattr(args, attr, None)
        if v is not None:
            vals[key] = v
    return DriftParams(**vals)


def _config(nh, nw, M, f_clk) -> ArrayConfig:
    for name, v in (("--nh", nh), ("--nw", nw)):
        if not 1 <= v <= MAX_DIM:
            raise ParamError(f"{name} must be in [1, {MAX_DIM}], got {v}")
    return ArrayConfig(nh, nw, M, f_clk)


def _int_list(text: str, name: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParamError(f"{name} expects comma-separated integers, got {text!r}") from None
    if not out:
        raise ParamError(f"{name} is empty")
    return out


def _write_manifest(path: Path, args, params: dict, inputs, outputs) -> None:
    doc = {
        "tool": "kurasim",
        "version": __version__,
        "command": args.command,
        "argv": args.argv,
        "params": params,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def _manifest_path(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def _write_field(field, path: Path) -> None:
    if path.suffix.lower() == ".csv":
        write_field_csv(field, path)
    else:
        write_kdf(field, path)


def _compute_drift(pmap, params, engine, boundary, config):
    if engine == "oracle":
        return drift_reformulated(pmap, params, boundary), None
    qp = QuantizedParams.from_params(params)
    if engine == "fixed":
        return drift_fixed(pmap, qp, boundary).drift, None
    res = run_image(pmap, config, qp, boundary)
    return res.fixed.drift, res


def _params_dict(p: DriftParams) -> dict:
    return {"K": p.K, "K_ref": p.K_ref, "psi_ref": p.psi_ref, "M": p.M}


# ---------------------------------------------------------------------------
# commands


def cmd_drift(args) -> int:
    params = _params(args)
    boundary = Boundary.parse(args.boundary)
    config = _config(args.nh, args.nw, params.M, args.fclk_hz) if args.engine == "systolic" else None
    pmap = _load(read_phase_map, args.input, "input map")
    field, _ = _compute_drift(pmap, params, args.engine, boundary, config)
    out = Path(args.output)
    _write_field(field, out)
    resolved = {"engine": args.engine, "boundary": boundary.value, **_params_dict(params)}
    if config:
        resolved.update(nh=config.N_h, nw=config.N_w, fclk_hz=config.f_clk)
    _write_manifest(_manifest_path(out), args, resolved, [args.input], [out])
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _params(args)
    boundary = Boundary.parse(args.boundary)
    config = _config(args.nh, args.nw, params.M, args.fclk_hz)
    pmap = _load(read_phase_map, args.input, "input map")
    qp = QuantizedParams.from_params(params)
    t0 = time.perf_counter()
    res = run_image(pmap, config, qp, boundary, record_events=bool(args.event_log),
                    overlap=not args.no_overlap)
    wall = time.perf_counter() - t0
    out = Path(args.output)
    trace_path = Path(args.trace) if args.trace else out.with_name(out.name + ".trace.csv")
    _write_field(res.fixed.drift, out)
    with atomic_path(trace_path) as tmp:
        res.trace.to_csv(tmp)
    outputs = [out, trace_path]
    if args.event_log:
        with atomic_path(args.event_log) as tmp:
            res.trace.write_event_log(tmp)
        outputs.append(Path(args.event_log))
    total = res.trace.total_cycles
    print(f"config {config.name}: {len(res.plan.tiles)} tiles, total cycles {total} "
          f"({res.trace.seconds(config.f_clk) * 1e6:.3f} us at {config.f_clk:g} Hz)")
    print(f"saturation events {res.fixed.saturations}; wall-clock {wall:.3f} s")
    resolved = {"boundary": boundary.value, "nh": config.N_h, "nw": config.N_w, "fclk_hz": config.f_clk,
                "overlap": not args.no_overlap, **_params_dict(params)}
    _write_manifest(_manifest_path(out), args, resolved, [args.input], outputs)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.jobs < 1:
        raise ParamError("--jobs must be >= 1")
    grid_h = _int_list(args.nh, "--nh")
    grid_w = _int_list(args.nw, "--nw")
    for v in grid_h + grid_w:
        if not 1 <= v <= MAX_DIM:
            raise ParamError(f"grid values must be in [1, {MAX_DIM}], got {v}")
    budgets = [float(b) for b in args.budgets.split(",")] if args.budgets else []
    inputs = []
    measurements = None
    resolved = {"nh": grid_h, "nw": grid_w, "m": args.m, "fclk_hz": args.fclk_hz, "budgets": budgets}
    if args.measurements:
        measurements = _load(dse.read_measurements, args.measurements, "measurement CSV")
        inputs.append(args.measurements)
        try:
            coeffs, r2p, r2a = dse.fit_coefficients(measurements)
        except dse.RankDeficientError as e:
            raise IOFailure(f"measurement CSV {args.measurements}: {e}") from None
        print(f"power fit: R² = {r2p:.6f}")
        print(f"area fit:  R² = {r2a:.6f}")
        neg = coeffs.negative_terms()
        if neg:
            print(f"warning: negative fitted coefficients {neg}", file=sys.stderr)
        resolved["coeff_source"] = "fit"
    elif args.coeffs:
        coeffs = _load(dse.ModelCoefficients.from_file, args.coeffs, "coefficient file")
        inputs.append(args.coeffs)
        resolved["coeff_source"] = "file"
    else:
        coeffs = dse.synthetic_coefficients()
        resolved["coeff_source"] = "bundled-synthetic"
    resolved["coefficients"] = {k: float(v) for k, v in vars(coeffs).items()}

    records = dse.sweep(coeffs, grid_h, grid_w, args.m, args.fclk_hz, measurements, jobs=args.jobs)
    frontier, best = dse.pareto_frontier(records, budgets)
    if args.fit_only:
        return EXIT_OK
    if not args.output:
        raise ParamError("--output is required unless --fit-only is given")
    out = Path(args.output)
    with atomic_path(out) as tmp:
        dse.write_sweep_csv(records, tmp)
    outputs = [out]
    print(f"{len(records)} configurations, {len(frontier)} on the Pareto frontier")
    if args.coeffs_out:
        atomic_write_bytes(args.coeffs_out, coeffs.to_text().encode())
        outputs.append(Path(args.coeffs_out))
    if budgets:
        bpath = out.with_name(out.stem + ".budgets.csv")
        with atomic_path(bpath) as tmp, open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["budget_um2", "nh", "nw", "area_um2", "epx_j"])
            for b in budgets:
                r = best[b]
                w.writerow([f"{b:.9g}"] + (["", "", "", ""] if r is None else
                                           [r.N_h, r.N_w, f"{r.area_um2:.9g}", f"{r.epx_j:.9g}"]))
        outputs.append(bpath)
        print(f"{'budget (um^2)':>14}  best      area (um^2)   E_px (pJ)")
        for b in budgets:
            r = best[b]
            if r is None:
                print(f"{b:14.6g}  none")
            else:
                print(f"{b:14.6g}  H{r.N_h}W{r.N_w:<5} {r.area_um2:12.0f}  {r.epx_j * 1e12:9.2f}")
    _write_manifest(_manifest_path(out), args, resolved, inputs, outputs)
    return EXIT_OK


def _generate(desc: str) -> PhaseMap:
    """``kind[:HxW[:arg]]`` with kind in striped, random, uniform."""
    parts = desc.split(":")
    kind = parts[0]
    h = w = 96
    try:
        if len(parts) > 1 and parts[1]:
            h, w = (int(v) for v in parts[1].lower().split("x"))
        arg = parts[2] if len(parts) > 2 else None
        if h < 1 or w < 1:
            raise ValueError
        if kind == "striped":
            return striped_map(h, w, period=int(arg) if arg else 16, phases=(0.0, math.pi / 2))
        if kind == "random":
            return random_phase_map(h, w, int(arg) if arg else 0)
        if kind == "uniform":
            return PhaseMap.from_radians(np.full((h, w), float(arg) if arg else 0.0))
    except ValueError:
        raise ParamError(f"bad generator description {desc!r}") from None
    raise ParamError(f"unknown generator {kind!r} (striped, random, uniform)")


def cmd_sample(args) -> int:
    schedule = _load(Schedule.from_file, args.schedule, "schedule") if args.schedule else Schedule()
    if args.dt is not None or args.m is not None:
        kw = {f: getattr(schedule, f) for f in schedule.__dataclass_fields__}
        if args.dt is not None:
            kw["dt"] = args.dt
        if args.m is not None:
            kw["M"] = args.m
        schedule = Schedule(**kw)
    steps = schedule.steps if args.steps is None else args.steps
    if steps < 0:
        raise ParamError("--steps must be >= 0")
    if args.every < 1:
        raise ParamError("--every must be >= 1")
    if (args.input is None) == (args.generator is None):
        raise ParamError("give exactly one of --input or --generator")
    inputs = []
    if args.input:
        pmap = _load(read_phase_map, args.input, "input map")
        inputs.append(args.input)
    else:
        pmap = _generate(args.generator)
    boundary = Boundary.parse(args.boundary)
    config = _config(args.nh, args.nw, schedule.M, args.fclk_hz) if args.engine == "systolic" else None

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = []

    def on_step(k, m):
        if k % args.every == 0 or k == steps:
            p = outdir / f"step_{k:04d}.kpm"
            write_kpm(m, p)
            outputs.append(p)

    traj = run_trajectory(pmap, schedule, args.seed, steps, args.direction, args.drift, args.engine,
                          boundary, config, on_step=on_step)
    cpath = outdir / "coherence.csv"
    with atomic_path(cpath) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "coherence"])
        for k, t, c in traj.coherence:
            w.writerow([k, f"{t:.9g}", f"{c:.12g}"])
    outputs.append(cpath)
    print(f"{steps} {args.direction} steps ({args.drift}, {args.engine}); "
          f"coherence {traj.coherence[0][2]:.6f} -> {traj.coherence[-1][2]:.6f}")
    resolved = {"seed": args.seed, "steps": steps, "direction": args.direction, "drift": args.drift,
                "engine": args.engine, "boundary": boundary.value, "generator": args.generator,
                "schedule": schedule.to_text()}
    _write_manifest(outdir / "manifest.json", args, resolved, inputs, outputs)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    t0 = time.perf_counter()
    results = run_all(ctile_offset=args.ctile_offset)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_lut(args) -> int:
    from .trig import default_lut, lut_error_sweep

    out = Path(args.output)
    with atomic_path(out) as tmp:
        default_lut().to_csv(tmp)
    s = lut_error_sweep()
    print(f"max error {s['max_err']:.3e}, max Pythagorean residual {s['max_pythagorean']:.3e}")
    _write_manifest(_manifest_path(out), args, {}, [], [out])
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        doc = json.loads(Path(args.manifest).read_text())
        argv = doc["argv"]
        expected = doc["outputs"]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise IOFailure(f"manifest {args.manifest}: {e}") from None
    if doc.get("version") != __version__:
        print(f"warning: manifest from version {doc.get('version')}, running {__version__}", file=sys.stderr)
    for p, digest in doc.get("inputs", {}).items():
        if not Path(p).exists() or sha256_file(p) != digest:
            raise IOFailure(f"input {p} is missing or changed since the manifest was written")
    code = main(argv)
    if code != EXIT_OK:
        return code
    bad = [p for p, d in expected.items() if not Path(p).exists() or sha256_file(p) != d]
    for p in bad:
        print(f"digest mismatch: {p}", file=sys.stderr)
    print("replay reproduced all outputs" if not bad else f"{len(bad)} outputs differ")
    return EXIT_VERIFY if bad else EXIT_OK


# ---------------------------------------------------------------------------


def _add_params(p):
    p.add_argument("--params", help="key = value file with K, K_ref, psi_ref, M")
    p.add_argument("--k", type=float)
    p.add_argument("--k-ref", type=float)
    p.add_argument("--psi-ref", type=float)
    p.add_argument("--m", type=int)


def _add_array(p, nh=20, nw=5):
    p.add_argument("--nh", type=int, default=nh)
    p.add_argument("--nw", type=int, default=nw)
    p.add_argument("--fclk-hz", type=float, default=1.0e8)


def _add_boundary(p):
    p.add_argument("--boundary", default="replicate", choices=[b.value for b in Boundary])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kurasim", description="Systolic Kuramoto drift simulator and DSE tools.")
    ap.add_argument("--version", action="version", version=f"kurasim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("drift", help="compute a drift field")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help=".kdf (KDF1) or .csv")
    p.add_argument("--engine", choices=ENGINES, default="fixed")
    _add_params(p)
    _add_array(p)
    _add_boundary(p)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("simulate", help="cycle-accurate array simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--trace", help="per-tile cycle CSV (default <output>.trace.csv)")
    p.add_argument("--event-log", help="optional per-cycle event log")
    p.add_argument("--no-overlap", action="store_true", help="serialize drain after each tile")
    _add_params(p)
    _add_array(p)
    _add_boundary(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="design-space sweep, Pareto frontier and model fitting")
    p.add_argument("--nh", default="5,10,15,20,25", help="comma-separated N_h grid")
    p.add_argument("--nw", default="5,10,15,20,25", help="comma-separated N_w grid")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--fclk-hz", type=float, default=1.0e8)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--coeffs", help="coefficient file (default: bundled synthetic set)")
    src.add_argument("--measurements", help="measurement CSV to fit")
    p.add_argument("--budgets", help="comma-separated area budgets in um^2")
    p.add_argument("--output")
    p.add_argument("--coeffs-out", help="write the coefficients used")
    p.add_argument("--fit-only", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample", help="forward or reverse diffusion trajectory")
    p.add_argument("--input")
    p.add_argument("--generator", help="striped|random|uniform[:HxW[:arg]]")
    p.add_argument("--schedule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--direction", choices=("forward", "reverse"), default="forward")
    p.add_argument("--drift", choices=("kuramoto", "trivial"), default="kuramoto")
    p.add_argument("--engine", choices=ENGINES, default="oracle")
    p.add_argument("--every", type=int, default=10, help="snapshot interval in steps")
    p.add_argument("--output", required=True, help="snapshot directory")
    _add_array(p)
    _add_boundary(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("selftest", help="run the verification suite")
    p.add_argument("--ctile-offset", type=int, default=0,
                   help="perturb the expected tile cycle count (mutation check)")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("lut", help="dump the quarter-wave table as CSV")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_lut)

    p = sub.add_parser("replay", help="re-run a manifest and verify output digests")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except IOFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"invalid parameter: {e}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
