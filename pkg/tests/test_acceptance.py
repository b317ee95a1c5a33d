"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the "acceptance criteria" section of the terminal summary.
"""
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from stefanloss.config import RunConfig
from stefanloss.diagnostics import diagnose
from stefanloss.evolution import StepConfig, evaluate, initial_state, run
from stefanloss.geometry import circle, ellipse
from stefanloss.overlap import cut, lipschitz_constant
from stefanloss.robin import energy_diagnostics, solve_curve
from stefanloss.shapegen import ShapeSpec, make_circle_frame, make_dumbbell

ROUNDOFF = 1e-12


def manufactured_error(curve, field):
    p = curve.points
    z = p[:, 0] + 1j * p[:, 1]
    if field == "x":
        u, grad = p[:, 0], np.column_stack([np.ones(len(p)), np.zeros(len(p))])
    else:
        u, grad = np.real(z**3), np.column_stack([np.real(3 * z**2), -np.imag(3 * z**2)])
    g = u - np.einsum("ij,ij->i", grad, curve.normal)
    _, trace, _ = solve_curve(curve, g)
    return float(np.max(np.abs(trace - u)) / np.max(np.abs(u)))


def test_criterion_01_circles(criterion):
    errs = {}
    for r in (0.5, 1.0, 2.0):
        _, u, _ = solve_curve(circle(r, 256))
        errs[r] = float(np.max(np.abs(u - 1 / r)))
    ok = max(errs.values()) <= 1e-8
    criterion(1, ok, "max |u - 1/r| = " + ", ".join(f"{e:.1e} (r={r})" for r, e in errs.items()) + " <= 1e-8")
    assert ok


def test_criterion_02_manufactured(criterion):
    sizes = [8, 16, 32, 64, 128, 256, 512]
    shapes = {"circle": lambda n: circle(1.0, n), "ellipse": lambda n: ellipse(2.0, 1.0, n)}
    ok, parts = True, []
    for sname, make in shapes.items():
        for field in ("x", "cubic"):
            errs = [manufactured_error(make(n), field) for n in sizes]
            # each doubling gains x10 until the error reaches roundoff
            shrink = all(b <= max(a / 10, ROUNDOFF) for a, b in zip(errs, errs[1:]))
            good = shrink and errs[-1] <= 1e-6
            ok &= good
            parts.append(f"{field}/{sname} {errs[0]:.1e}->{errs[-1]:.1e}")
    criterion(2, ok, "relative trace errors N=8->512: " + "; ".join(parts))
    assert ok


@pytest.fixture(scope="module")
def embedded_family():
    out = {}
    for R in (8.0, 10.0, 16.0):
        d = make_dumbbell(ShapeSpec(R=R, delta=0.2, gap=0.02, nodes=1024))
        system, u, _ = solve_curve(d.curve)
        out[R] = (d, u)
    return out


def test_criterion_03_bounds(criterion, embedded_family):
    ok, parts = True, []
    for R, (_, u) in embedded_family.items():
        good = u.min() >= -1 / R - 1e-3 and u.max() <= 1 + 1e-3
        ok &= good
        parts.append(f"R={R:g}: [{u.min():.4f}, {u.max():.4f}]")
    criterion(3, ok, "-1/R - 1e-3 <= u <= 1 + 1e-3; " + ", ".join(parts))
    assert ok


def test_criterion_04_energy(criterion, embedded_family):
    ok, parts = True, []
    for R, (d, u) in embedded_family.items():
        e = energy_diagnostics(d.curve, u, d.curve.curvature)
        good = e.robin <= math.pi + 5 / R and e.ok
        ok &= good
        parts.append(f"R={R:g}: {e.robin:.4f} <= {math.pi + 5 / R:.4f}")
    criterion(4, ok, "Robin energy <= pi + 5/R; " + ", ".join(parts))
    assert ok


@pytest.fixture(scope="module")
def critical_report():
    return diagnose(RunConfig(shape=ShapeSpec(R=10, delta=0.2, gap=0.0, nodes=1024)))


def test_criterion_05_bridge_positivity(criterion, critical_report):
    vals = critical_report["bridge_values"]
    ok = len(vals) == 4 and all(not v["outside"] and v["u"] > 0 for v in vals)
    detail = ", ".join(f"u({v['x']:g},{v['y']:+g})={v['u']:.4f}" for v in vals if v["u"] is not None)
    criterion(5, ok, detail)
    assert ok


def test_criterion_06_sign_condition(criterion, critical_report):
    flats = critical_report["flats"]
    ok = len(flats) == 2 and all(f["negative_run"] >= f["flat_length"] / 2 for f in flats)
    runs = ", ".join(f"{f['negative_run']:.4f}" for f in flats)
    criterion(6, ok, f"H - u < 0 on a sub-arc of length {runs} of each flat (need >= delta/2 = 0.1)")
    assert ok


@pytest.mark.slow
def test_criterion_07_steady_circles(criterion):
    ok, parts = True, []
    for r in (0.5, 1.0, 2.0):
        cfg = StepConfig(dt=1e-3, max_t=1.0)
        res = run(initial_state(make_circle_frame(r, 256), cfg), cfg, frame_every=1)
        drift = max(float(np.max(np.abs(s.rho))) for s in res.frames)
        kinds = [e.kind for e in res.events]
        good = drift <= 1e-3 and kinds == ["horizon"] and res.final.t == pytest.approx(1.0)
        ok &= good
        parts.append(f"r={r:g}: max|rho|={drift:.1e}, events={kinds}")
    criterion(7, ok, "; ".join(parts))
    assert ok


def onset_time(nodes, dt):
    frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=0.0, nodes=nodes)).frame
    cfg = StepConfig(dt=dt, max_t=0.1)
    res = run(initial_state(frame, cfg), cfg)
    onset = res.event("overlapOnset")
    peak = max(s.ev.overlap_measure for s in res.frames)
    return (onset.t if onset else None), peak


@pytest.mark.slow
def test_criterion_08_loss_of_embeddedness(criterion):
    t0, peak = onset_time(512, 1e-3)
    t_grid, _ = onset_time(1024, 1e-3)
    t_dt, _ = onset_time(512, 5e-4)
    ok = t0 is not None and t0 > 0 and peak >= 0.01
    if ok:
        ok = t_grid is not None and t_dt is not None
        ok = ok and abs(t_grid - t0) <= 0.2 * t0 and abs(t_dt - t0) <= 0.1 * t0
    criterion(8, ok, f"t0={t0} (N=512, dt=1e-3), overlap measure {peak:.3f}; "
                     f"N=1024: {t_grid}; dt=5e-4: {t_dt}")
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="embedded neighbours do not touch: the gap between the flats widens "
                                       "after a short initial dip; see README, Known limitations")
def test_criterion_09_embedded_neighbour(criterion):
    touch = {}
    for eta in (0.01, 0.02, 0.04):
        frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=eta, nodes=512)).frame
        cfg = StepConfig(dt=1e-3, max_t=1.0)
        res = run(initial_state(frame, cfg), cfg, frame_every=100)
        ev = res.event("firstTouch")
        onset = res.event("overlapOnset")
        ordered = ev is not None and (onset is None or onset.t >= ev.t)
        touch[eta] = ev.t if ordered and ev.t > 0 else None
    times = [touch[e] for e in (0.01, 0.02, 0.04)]
    ok = touch[0.02] is not None and None not in times and times[0] < times[1] < times[2]
    criterion(9, ok, "t_touch by eta: " + ", ".join(f"{e:g}: {t}" for e, t in touch.items()))
    assert ok


def test_criterion_10_cut_algebra(criterion):
    frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=0.0, nodes=512)).frame
    rng = np.random.default_rng(20240601)
    s = frame.base.s
    bound = 0.9 * frame.a0 / 4
    idem = minf = contr = True
    overlapping = 0
    worst = -np.inf
    for _ in range(200):
        k = rng.integers(1, 9, size=4)
        rho = sum(rng.normal() * np.cos(kk * s + rng.uniform(0, 2 * np.pi)) for kk in k)
        rho *= rng.uniform(0.001, bound) / np.max(np.abs(rho))
        res = cut(frame, rho)
        overlapping += bool(res.mask.any())
        idem &= bool(np.array_equal(cut(frame, res.rho_tilde).rho_tilde, res.rho_tilde))
        minf &= res.formulas_agree
        b0 = res.b0
        slack = lipschitz_constant(frame, res.rho_tilde - b0) - lipschitz_constant(frame, rho - b0)
        worst = max(worst, slack)
        contr &= slack <= 1e-9
    ok = idem and minf and contr and overlapping >= 50
    criterion(10, ok, f"200 samples ({overlapping} overlapping): idempotent={idem}, min-formula={minf}, "
                      f"Lip(cut) - Lip(rho) <= {worst:.1e}")
    assert ok


def test_criterion_11_continuity(criterion):
    frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=0.02, nodes=512)).frame
    cfg = StepConfig()
    base = evaluate(frame, np.zeros(frame.n), cfg)
    c = frame.base
    phi = np.cos(0.7 * c.x) * np.cos(1.3 * c.y)
    ratios = []
    for size in (1e-2, 1e-3):
        ev = evaluate(frame, size * phi, cfg)
        ratios.append(float(np.max(np.abs(ev.u - base.u)) / (size * np.max(np.abs(phi)))))
    spread = max(ratios) / min(ratios)
    ok = spread <= 3
    criterion(11, ok, f"response ratios {ratios[0]:.3f} (1e-2), {ratios[1]:.3f} (1e-3), spread x{spread:.2f} <= 3")
    assert ok


@pytest.mark.slow
def test_criterion_12_determinism(criterion, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[shape]\ngap = 0.0\nnodes = 512\n[step]\nmax_t = 0.01\n[output]\nframe_every = 1\nplots = true\n")
    for name in ("a", "b"):
        subprocess.run([sys.executable, "-m", "stefanloss", "simulate", "--config", str(config),
                        "--out", str(tmp_path / name)], check=False, capture_output=True)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = Path("frames.jsonl") in files and all(same)
    criterion(12, ok, f"two simulate processes, {len(files)} output files, {sum(same)} byte-identical")
    assert ok
