"""Command line entry point: shapegen, solve, diagnose, simulate, render."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .diagnostics import build_frame, diagnose
from .evolution import EllipticityLost, SimState, initial_state, run
from .geometry import GeometryError, RebaselineRequired, min_gap, read_curve_csv, write_curve_csv
from .render import render_svg
from .robin import IllConditioningWarning, RobinSolveError, assemble, eval_interior, solve_robin
from .shapegen import ShapeError, make_dumbbell

log = logging.getLogger("stefanloss")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4
NUMERIC_ERRORS = (RobinSolveError, EllipticityLost, RebaselineRequired, GeometryError, np.linalg.LinAlgError)

SHAPE_FLAGS = {"R": float, "delta": float, "zeta": float, "gap": float, "x0": float, "nodes": int}


def _resolve_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k) for k in SHAPE_FLAGS if getattr(args, k, None) is not None}
    if overrides:
        cfg = dataclasses.replace(cfg, shape=dataclasses.replace(cfg.shape, **overrides))
    if getattr(args, "circle", None) is not None:
        cfg = dataclasses.replace(cfg, case=cfgmod.CaseConfig("circle", args.circle))
    cfg.validate()
    return cfg


def _read_curve(path):
    try:
        return read_curve_csv(path)
    except GeometryError:
        raise
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read curve {path}: {exc}") from exc


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_shapegen(args) -> int:
    cfg = _resolve_config(args)
    d = make_dumbbell(cfg.shape)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curve_csv(d.curve, out)
    frame = d.frame
    info = {
        "spec": dataclasses.asdict(cfg.shape),
        "a0": frame.a0,
        "upper_window": [int(i) for i in frame.upper],
        "lower_window": [int(i) for i in frame.lower],
        "b0_upper": [float(v) for v in frame.b0[frame.upper]],
        "b0_lower": [float(v) for v in frame.b0[frame.lower]],
        "window_problems": frame.check_windows(),
        "closure_defect_before": d.closure_defect_before,
        "length": d.curve.length,
        "min_gap": min_gap(d.curve),
    }
    if args.frame:
        Path(args.frame).parent.mkdir(parents=True, exist_ok=True)
        _dump_json(info, Path(args.frame))
    log.info("wrote %s (%d nodes, min gap %.3g)", out, d.curve.n, info["min_gap"])
    return EXIT_OK


def cmd_solve(args) -> int:
    curve = _read_curve(args.curve)
    floor = max(1e-3, 2.0 * float(np.min(curve.node_spacing)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditioningWarning)
        system = assemble(curve, gap_floor=floor)
    for w in caught:
        log.warning("%s", w.message)
    h = curve.curvature
    u, sigma = solve_robin(system, h)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["s", "u", "H", "sigma"])
        for row in zip(curve.s, u, h, sigma):
            wr.writerow([repr(float(v)) for v in row])
    if args.points:
        pts = np.loadtxt(args.points, delimiter=",", skiprows=1, ndmin=2)[:, :2]
        vals, outside = eval_interior(system, sigma, pts)
        target = out.with_name(out.stem + "_points.csv")
        with open(target, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "y", "u", "outside"])
            for (x, y), v, o in zip(pts, vals, outside):
                wr.writerow([repr(float(x)), repr(float(y)), "nan" if o else repr(float(v)), int(o)])
    log.info("condition estimate %.3g", system.condition)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _resolve_config(args)
    report = diagnose(cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(report, out / "report.json")
    print(f"u range [{report['u_min']:.6f}, {report['u_max']:.6f}]  bounds ok: {report['bounds_ok']}")
    print(f"robin energy {report['robin_energy']:.6f}  bound {report['energy_bound']:.6f}")
    for bv in report.get("bridge_values", []):
        val = "outside" if bv["outside"] else f"{bv['u']:.6f}"
        print(f"u({bv['x']:g}, {bv['y']:+g}) = {val}")
    for k, f in enumerate(report.get("flats", [])):
        print(f"flat {k}: H - u < 0 over arclength {f['negative_run']:.4f} of {f['flat_length']:g}")
    print(f"melting prediction: {report['verdict']}")
    return EXIT_OK


def _frame_record(state: SimState, curve_path: str) -> dict:
    ev = state.ev
    return {
        "t": state.t,
        "step": state.step,
        "min_gap": ev.min_gap,
        "overlap_measure": ev.overlap_measure,
        "overlap_depth": ev.overlap_depth,
        "embedded": ev.embedded,
        "bridge_sign": ev.bridge_sign if np.isfinite(ev.bridge_sign) else None,
        "max_rho": float(np.max(np.abs(state.rho))),
        "extended": state.extended,
        "curve_csv_path": curve_path,
    }


def simulate(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "curves").mkdir(exist_ok=True)
    if cfg.output.plots:
        (out / "svg").mkdir(exist_ok=True)
    (out / "config.toml").write_text(cfgmod.dumps(cfg))
    step_cfg = cfg.step_config
    frame = build_frame(cfg)
    jsonl = open(out / "frames.jsonl", "w")

    def on_frame(state: SimState) -> None:
        ev = state.ev
        name = f"curves/frame_{state.step:06d}.csv"
        om = np.full(state.frame.n, ev.overlap_measure)
        write_curve_csv(ev.curve, out / name, {"u": ev.u, "H": ev.h, "mask": ev.cut.mask, "overlap_measure": om})
        jsonl.write(json.dumps(_frame_record(state, name), allow_nan=False) + "\n")
        jsonl.flush()
        if cfg.output.plots:
            svg = render_svg(ev.curve.points, ev.cut.mask, title=f"t = {state.t:.6g}")
            (out / "svg" / f"frame_{state.step:06d}.svg").write_text(svg)
        log.info("t=%.4g min_gap=%.3g overlap=%.3g", state.t, ev.min_gap, ev.overlap_measure)

    try:
        try:
            state0 = initial_state(frame, step_cfg)
        except NUMERIC_ERRORS as exc:
            _dump_json({"status": "failure", "exit_code": EXIT_NUMERIC, "events": [
                {"kind": "failure", "t": 0.0, "step": 0, "detail": f"{type(exc).__name__}: {exc}"}],
                "t_touch": None, "t_overlap": None, "config": "config.toml"}, out / "events.json")
            return EXIT_NUMERIC
        result = run(state0, step_cfg, frame_every=cfg.output.frame_every, on_frame=on_frame)
    finally:
        jsonl.close()
    code = {"horizon": EXIT_OK, "cap": EXIT_CAP, "failure": EXIT_NUMERIC}[result.status]
    touch, onset = result.event("firstTouch"), result.event("overlapOnset")
    _dump_json({
        "status": result.status,
        "exit_code": code,
        "t_touch": touch.t if touch else None,
        "t_overlap": onset.t if onset else None,
        "events": [dataclasses.asdict(e) for e in result.events],
        "config": "config.toml",
        "frames": len(result.frames),
    }, out / "events.json")
    return code


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    return simulate(cfg, out)


def cmd_render(args) -> int:
    try:
        with open(args.frame, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        mask = np.array([bool(int(float(r["mask"]))) if "mask" in r else False for r in rows])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read frame {args.frame}: {exc}") from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_svg(pts, mask))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = argparse.ArgumentParser(prog="stefanloss", parents=[common],
                                description="Quasistationary Stefan flow with a melting bridge.")
    sub = p.add_subparsers(dest="command", required=True)

    def shape_flags(sp):
        sp.add_argument("--config")
        for name, typ in SHAPE_FLAGS.items():
            sp.add_argument(f"--{name}", type=typ)

    sp = sub.add_parser("shapegen", parents=[common], help="build the initial dumbbell curve")
    shape_flags(sp)
    sp.add_argument("--out", required=True, help="curve CSV")
    sp.add_argument("--frame", help="frame JSON (a0, windows, b0)")
    sp.set_defaults(func=cmd_shapegen)

    sp = sub.add_parser("solve", parents=[common], help="solve the Robin problem on a curve")
    sp.add_argument("--curve", required=True)
    sp.add_argument("--out", required=True, help="trace CSV s,u,H,sigma")
    sp.add_argument("--points", help="CSV of interior points x,y")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("diagnose", parents=[common], help="check the initial state")
    shape_flags(sp)
    sp.add_argument("--circle", type=float, help="use a circle of this radius instead")
    sp.add_argument("--out", help="directory for report.json")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("simulate", parents=[common], help="run the evolution")
    shape_flags(sp)
    sp.add_argument("--out", help="output directory (default from config)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("render", parents=[common], help="SVG of a frame CSV")
    sp.add_argument("--frame", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
