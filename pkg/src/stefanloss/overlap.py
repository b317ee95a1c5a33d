"""Overlap cutting on the bridge windows.

On the upper window the part of the curve that has crossed y = 0 is replaced
by its vertical projection onto the axis (rho -> b0 = y0/n0^2) and its
curvature is set to zero; the lower window is the mirror image. Because
y = y0 - rho n0^2, the crossing condition on either window is rho > b0, so
the cut is rho~ - b0 = min(rho - b0, 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ClosedCurve, ReferenceFrame, cyclic_order, graph_to_curve
from .shapegen import bump_cdf


def _windows(frame: ReferenceFrame):
    return [(cyclic_order(frame.upper, frame.n), -1.0), (cyclic_order(frame.lower, frame.n), 1.0)]


def detect_overlap(frame: ReferenceFrame, curve: ClosedCurve) -> np.ndarray:
    """Nodes of O0+ with y < 0 and nodes of O0- with y > 0."""
    mask = np.zeros(frame.n, dtype=bool)
    y = curve.y
    mask[frame.upper] = y[frame.upper] < 0
    mask[frame.lower] = y[frame.lower] > 0
    return mask


def overlap_measure(frame: ReferenceFrame, curve: ClosedCurve) -> float:
    """Arclength of the window polylines lying on the wrong side of y = 0.

    Crossing points inside a segment are located by linear interpolation of
    y, so the measure converges under refinement instead of counting nodes.
    """
    total = 0.0
    pts = curve.points
    for idx, side in _windows(frame):
        if idx.size < 2:
            continue
        p = pts[idx]
        depth = side * p[:, 1]  # > 0 on the wrong side
        seg = np.hypot(*np.diff(p, axis=0).T)
        d0, d1 = depth[:-1], depth[1:]
        frac = np.where((d0 > 0) & (d1 > 0), 1.0, 0.0)
        mixed = (d0 > 0) != (d1 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            part = np.where(d0 > 0, d0, d1) / np.abs(d0 - d1)
        frac = np.where(mixed, part, frac)
        total += float(np.sum(frac * seg))
    return total


def overlap_depth(frame: ReferenceFrame, curve: ClosedCurve) -> float:
    """Largest distance by which a window node lies beyond y = 0 (0 if none)."""
    d = 0.0
    if frame.upper.size:
        d = max(d, float(np.max(-curve.y[frame.upper])))
    if frame.lower.size:
        d = max(d, float(np.max(curve.y[frame.lower])))
    return max(d, 0.0)


@dataclass(frozen=True, eq=False)
class CutResult:
    rho: np.ndarray
    rho_tilde: np.ndarray
    mask: np.ndarray
    curve: ClosedCurve
    curve_tilde: ClosedCurve
    overlap_measure: float
    lipschitz_norm: float
    min_formula: np.ndarray  # min(rho - b0, 0) on the windows, NaN elsewhere
    b0: np.ndarray

    @property
    def formulas_agree(self) -> bool:
        w = np.isfinite(self.min_formula)
        return bool(np.array_equal(self.rho_tilde[w] - self.b0[w], self.min_formula[w]))

    @property
    def is_identity(self) -> bool:
        return not self.mask.any()


def cut(frame: ReferenceFrame, rho: np.ndarray, check: bool = True) -> CutResult:
    rho = np.asarray(rho, dtype=float)
    curve = graph_to_curve(frame, rho, check=check)
    b0 = frame.b0_filled()
    win = frame.window_mask
    mask = detect_overlap(frame, curve)
    rho_t = np.where(mask, b0, rho)
    minf = np.full(frame.n, np.nan)
    minf[win] = np.minimum(rho[win] - b0[win], 0.0)
    pts = graph_to_curve(frame, rho_t, check=False).points.copy()
    pts[mask, 1] = 0.0
    return CutResult(rho, rho_t, mask, curve, ClosedCurve(pts), overlap_measure(frame, curve),
                     window_lipschitz(frame, rho_t), minf, b0)


def cut_curvature(h: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, h)


def window_lipschitz(frame: ReferenceFrame, f: np.ndarray) -> float:
    """max(sup|f|, sup|f'|) over the windows, f' by one-sided differences in s."""
    ds = 2 * np.pi / frame.n
    norm = 0.0
    for idx, _ in _windows(frame):
        if idx.size == 0:
            continue
        v = f[idx]
        norm = max(norm, float(np.max(np.abs(v))))
        if idx.size > 1:
            norm = max(norm, float(np.max(np.abs(np.diff(v)))) / ds)
    return norm


def lipschitz_constant(frame: ReferenceFrame, f: np.ndarray) -> float:
    """Discrete Lipschitz constant of f (in s) over the windows."""
    ds = 2 * np.pi / frame.n
    lip = 0.0
    for idx, _ in _windows(frame):
        if idx.size > 1:
            lip = max(lip, float(np.max(np.abs(np.diff(f[idx])))) / ds)
    return lip


def lipschitz_check(result: CutResult, mu: float = 0.25) -> tuple[float, bool]:
    return result.lipschitz_norm, result.lipschitz_norm <= mu


def open_bridge(frame: ReferenceFrame, curve: ClosedCurve, eta: float, taper: float = 1.0) -> tuple[ClosedCurve, float]:
    """Push the two bridge arcs apart so they are at least ``eta`` apart.

    Each window is shifted vertically (upper up, lower down) by just enough to
    put it at distance eta/2 from the axis; the shift fades out smoothly over
    ``taper`` arclength beyond the window. Returns the opened curve and the
    applied shift (0 when the curve is already open).
    """
    pts = curve.points.copy()
    ell = curve.arclength()
    total = curve.length
    applied = 0.0
    for idx, side in _windows(frame):
        if idx.size == 0:
            continue
        need = max(eta / 2 - float(np.min(-side * pts[idx, 1])), 0.0)
        if need == 0.0:
            continue
        applied = max(applied, need)
        lo, hi = ell[idx[0]], ell[idx[-1]]
        half = 0.5 * np.mod(hi - lo, total)
        centre = lo + half
        d = np.abs(np.mod(ell - centre + total / 2, total) - total / 2)
        phi = 1.0 - bump_cdf(2.0 * (d - half) / taper - 1.0)
        pts[:, 1] += -side * need * phi
    return curve.with_points(pts), applied
