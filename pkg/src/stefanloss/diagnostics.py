"""Initial-state checks: bounds on u, bridge values, energy and the melting sign."""
from __future__ import annotations

import math

import numpy as np

from .config import RunConfig
from .evolution import Evaluation, evaluate
from .geometry import ReferenceFrame, cyclic_order
from .robin import assemble, energy_diagnostics, eval_interior
from .shapegen import make_circle_frame, make_dumbbell

BRIDGE_HEIGHTS = (0.05, 0.02)


def build_frame(cfg: RunConfig) -> ReferenceFrame:
    if cfg.case.kind == "circle":
        return make_circle_frame(cfg.case.radius, cfg.shape.nodes)
    return make_dumbbell(cfg.shape).frame


def flat_nodes(frame: ReferenceFrame, x0: float, delta: float) -> list[np.ndarray]:
    """Window nodes over the flat part |x - x0| <= delta/2, in curve order."""
    out = []
    for idx in (frame.upper, frame.lower):
        if idx.size == 0 or delta <= 0:
            continue
        idx = cyclic_order(idx, frame.n)
        out.append(idx[np.abs(frame.base.x[idx] - x0) <= delta / 2])
    return out


def negative_run_length(curve_points: np.ndarray, values: np.ndarray) -> float:
    """Arclength of the longest run of consecutive nodes with values < 0."""
    best, start = 0.0, None
    seg = np.hypot(*np.diff(curve_points, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    for k, neg in enumerate(np.append(values < 0, False)):
        if neg and start is None:
            start = k
        elif not neg and start is not None:
            best = max(best, cum[k - 1] - cum[start])
            start = None
    return float(best)


def diagnose(cfg: RunConfig, ev: Evaluation | None = None) -> dict:
    frame = build_frame(cfg)
    rho = np.zeros(frame.n)
    if ev is None:
        ev = evaluate(frame, rho, cfg.step_config)
    u, h = ev.u, ev.h
    dumbbell = cfg.case.kind == "dumbbell"
    eps = 1.0 / cfg.shape.R if dumbbell else 0.0
    energies = energy_diagnostics(ev.opened, u, ev.h_tilde)
    report = {
        "case": cfg.case.kind,
        "nodes": frame.n,
        "u_min": float(u.min()),
        "u_max": float(u.max()),
        "u_lower_bound": -eps,
        "u_upper_bound": 1.0,
        "bounds_ok": bool(u.min() >= -eps - 1e-3 and u.max() <= 1.0 + 1e-3),
        "dirichlet_energy": energies.dirichlet,
        "robin_energy": energies.robin,
        "energy_bound": energies.bound,
        "energy_ok": energies.ok,
        "condition": ev.condition,
        "eta_reg": ev.eta_reg,
        "min_gap": ev.min_gap,
    }
    if dumbbell:
        report["energy_reference"] = math.pi + 5.0 * eps
        report["energy_reference_ok"] = bool(energies.robin <= math.pi + 5.0 * eps)
        system = assemble(ev.opened)
        pts = [(cfg.shape.x0, sgn * hh) for hh in BRIDGE_HEIGHTS for sgn in (1.0, -1.0)]
        vals, outside = eval_interior(system, ev.sigma, pts, near_factor=cfg.solver.near_factor)
        report["bridge_values"] = [
            {"x": p[0], "y": p[1], "u": None if o else float(v), "outside": bool(o)}
            for p, v, o in zip(pts, vals, outside)
        ]
        flats = []
        for idx in flat_nodes(frame, cfg.shape.x0, cfg.shape.delta):
            sign = h[idx] - u[idx]
            run = negative_run_length(ev.curve.points[idx], sign)
            flats.append({"nodes": int(idx.size), "max_h_minus_u": float(sign.max()) if idx.size else None,
                          "negative_run": run, "flat_length": cfg.shape.delta})
        report["flats"] = flats
        # melting prediction: H - u < 0 on an open sub-arc of every flat
        melt = bool(flats) and all(f["negative_run"] > 0 for f in flats)
        if not flats:
            # no flat part: look at the window centres instead
            centres = [cyclic_order(i, frame.n)[i.size // 2] for i in (frame.upper, frame.lower) if i.size]
            melt = bool(centres) and all(h[c] - u[c] < 0 for c in centres)
        report["verdict"] = "PASS" if melt else "FAIL"
    else:
        report["verdict"] = "FAIL"
        report["verdict_reason"] = "no bridge: H - u does not change the embedding"
    report["max_abs_h_minus_u"] = float(np.max(np.abs(h - u)))
    return report
