"""Periodic closed curves: spectral differential geometry, normal graphs,
arclength resampling and self-intersection detection.

Curves are sampled at N uniformly spaced parameters s_i = 2*pi*i/N. The
parameter need not be arclength; every derivative is taken with respect to s
and converted with the speed |F'|.

Conventions: curves are counterclockwise, the inner normal is the unit tangent
rotated by +90 degrees, and curvature is positive on counterclockwise circles.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    """Input curve violates a geometric precondition."""


class RebaselineRequired(RuntimeError):
    """A normal graph left the admissible tubular neighbourhood of its frame."""


# --------------------------------------------------------------------------
# periodic spectral calculus on a uniform grid


def wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


def spectral_derivative(f: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative d^order f / ds^order of samples on the uniform 2*pi grid.

    Works along axis 0. For odd orders the Nyquist mode is dropped.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    k = wavenumbers(n)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    fh = np.fft.fft(f, axis=0)
    shape = (n,) + (1,) * (f.ndim - 1)
    return np.real(np.fft.ifft(fh * mult.reshape(shape), axis=0))


@functools.lru_cache(maxsize=16)
def differentiation_matrix(n: int, order: int) -> np.ndarray:
    """Dense matrix D with D @ f == spectral_derivative(f, order)."""
    d = spectral_derivative(np.eye(n), order)
    d.setflags(write=False)
    return d


def cumulative_integral(f: np.ndarray) -> np.ndarray:
    """Spectral antiderivative I(s_i) = int_0^{s_i} f(s) ds on the uniform grid.

    The mean of f contributes the linear part; the rest is periodic.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    s = 2 * np.pi * np.arange(n) / n
    fh = np.fft.fft(f, axis=0)
    mean = np.real(fh[0]) / n
    k = wavenumbers(n)
    mult = np.zeros(n, dtype=complex)
    nz = k != 0
    mult[nz] = 1.0 / (1j * k[nz])
    if n % 2 == 0:
        mult[n // 2] = 0.0
    shape = (n,) + (1,) * (f.ndim - 1)
    periodic = np.real(np.fft.ifft(fh * mult.reshape(shape), axis=0))
    periodic = periodic - periodic[0]
    return mean * s.reshape(shape) + periodic


def trig_interpolate(values: np.ndarray, s_new: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of uniform samples at arbitrary s.

    The Nyquist mode is taken as a cosine so that real data stays real.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    coef = np.fft.fft(values, axis=0) / n
    k = wavenumbers(n)
    s_new = np.asarray(s_new, dtype=float)
    mult = (1j * k) ** derivative
    nyq = n // 2 if n % 2 == 0 else None
    if nyq is not None:
        mult[nyq] = 0.0
    if values.ndim > 1:
        mult = mult[:, None]
    out = np.real(np.exp(1j * np.outer(s_new, k)) @ (coef * mult))
    if nyq is not None:
        # d^k/ds^k cos(m s) = m^k cos(m s + k pi / 2)
        term = nyq**derivative * np.cos(nyq * s_new + derivative * np.pi / 2)
        c = np.real(coef[nyq])
        out = out + (np.multiply.outer(term, c) if values.ndim > 1 else term * c)
    return out


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Counterclockwise closed curve sampled at uniform parameters.

    ``points`` has shape (N, 2). Derived quantities are cached on first use.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError(f"points must have shape (N, 2), got {pts.shape}")
        if pts.shape[0] < 8 or pts.shape[0] % 2:
            raise GeometryError("node count must be even and at least 8")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("non-finite node positions")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def s(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @functools.cached_property
    def derivative(self) -> np.ndarray:
        return spectral_derivative(self.points, 1)

    @functools.cached_property
    def second_derivative(self) -> np.ndarray:
        return spectral_derivative(self.points, 2)

    @functools.cached_property
    def speed(self) -> np.ndarray:
        sp = np.hypot(self.derivative[:, 0], self.derivative[:, 1])
        if not np.all(np.isfinite(sp)):
            raise GeometryError("non-finite derivative")
        return sp

    @functools.cached_property
    def tangent(self) -> np.ndarray:
        return self.derivative / self.speed[:, None]

    @functools.cached_property
    def normal(self) -> np.ndarray:
        t = self.tangent
        return np.column_stack([-t[:, 1], t[:, 0]])

    @functools.cached_property
    def curvature(self) -> np.ndarray:
        d1, d2 = self.derivative, self.second_derivative
        return (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / self.speed**3

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for int f |F'| ds."""
        return self.speed * (2 * np.pi / self.n)

    @functools.cached_property
    def length(self) -> float:
        return float(np.sum(self.weights))

    @functools.cached_property
    def signed_area(self) -> float:
        # 1/2 * int (x y' - y x') ds, spectrally exact for band-limited curves
        d1 = self.derivative
        integrand = self.x * d1[:, 1] - self.y * d1[:, 0]
        return float(0.5 * np.sum(integrand) * 2 * np.pi / self.n)

    @property
    def node_spacing(self) -> np.ndarray:
        """Local arclength spacing h_i = |F'(s_i)| * 2*pi/N."""
        return self.weights

    def validate(self) -> None:
        if np.min(self.speed) <= 0.0:
            raise GeometryError("curve is not regular")
        if self.signed_area <= 0.0:
            raise GeometryError("curve must be positively oriented")

    def arclength(self) -> np.ndarray:
        """Cumulative arclength at the nodes, starting at 0."""
        return cumulative_integral(self.speed)

    def with_points(self, points: np.ndarray) -> "ClosedCurve":
        return ClosedCurve(points)


def tangent_normal_curvature(curve: ClosedCurve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit tangent, inner unit normal and curvature at every node."""
    if np.min(curve.speed) <= 1e-14 * max(curve.length, 1.0):
        raise GeometryError("degenerate node spacing")
    return curve.tangent, curve.normal, curve.curvature


def curve_from_function(func: Callable[[np.ndarray], np.ndarray], n: int) -> ClosedCurve:
    s = 2 * np.pi * np.arange(n) / n
    return ClosedCurve(np.asarray(func(s), dtype=float).reshape(2, n).T)


def circle(radius: float = 1.0, n: int = 256, center: Sequence[float] = (0.0, 0.0)) -> ClosedCurve:
    s = 2 * np.pi * np.arange(n) / n
    return ClosedCurve(np.column_stack([center[0] + radius * np.cos(s), center[1] + radius * np.sin(s)]))


def ellipse(a: float, b: float, n: int) -> ClosedCurve:
    s = 2 * np.pi * np.arange(n) / n
    return ClosedCurve(np.column_stack([a * np.cos(s), b * np.sin(s)]))


# --------------------------------------------------------------------------
# reference frames and normal graphs


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    """Fixed reference curve with tubular radius and the two bridge windows.

    ``upper`` and ``lower`` are node-index arrays of the windows O0+ and O0-.
    ``b0`` holds y0/n0^2 at every node (only meaningful on the windows).
    ``upper_half``/``lower_half`` are boolean node masks of X+ and X-, used
    to measure the tubular radius of each half separately.
    """

    base: ClosedCurve
    a0: float
    upper: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    lower: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    upper_half: np.ndarray | None = None
    lower_half: np.ndarray | None = None

    @functools.cached_property
    def b0(self) -> np.ndarray:
        n2 = self.base.normal[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(np.abs(n2) > 1e-12, self.base.y / n2, np.nan)
        return b

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def window_mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.upper] = True
        m[self.lower] = True
        return m

    def check_windows(self, b_tol: float = 0.1) -> list[str]:
        """Return violated window conditions (empty when the frame is admissible)."""
        problems = []
        n2 = self.base.normal[:, 1]
        dx = self.base.derivative[:, 0]
        if self.upper.size:
            if np.any(n2[self.upper] <= 0) or np.any(dx[self.upper] <= 0):
                problems.append("upper window: need n0^2 > 0 and x0' > 0")
        if self.lower.size:
            if np.any(n2[self.lower] >= 0) or np.any(dx[self.lower] >= 0):
                problems.append("lower window: need n0^2 < 0 and x0' < 0")
        for name, idx in (("upper", self.upper), ("lower", self.lower)):
            if idx.size > 1:
                idx = cyclic_order(idx, self.n)
                b = self.b0[idx]
                dl = np.mod(np.diff(self.base.arclength()[idx]), self.base.length)
                db = np.diff(b) / dl
                if np.max(np.abs(b)) > b_tol or np.max(np.abs(db)) > b_tol:
                    problems.append(f"{name} window: |b0| or |b0'| exceeds {b_tol}")
        return problems

    def b0_filled(self) -> np.ndarray:
        b = self.b0.copy()
        b[~np.isfinite(b)] = 0.0
        return b


def cyclic_order(idx: np.ndarray, n: int) -> np.ndarray:
    """Order an index window that may wrap past N-1 -> 0 along the curve."""
    idx = np.sort(np.asarray(idx, dtype=int))
    if idx.size < 2:
        return idx
    jumps = np.flatnonzero(np.diff(idx) > 1)
    if idx[0] == 0 and idx[-1] == n - 1 and jumps.size:
        return np.roll(idx, -(jumps[0] + 1))
    return idx


def tubular_radius(curve: ClosedCurve, halves: Sequence[np.ndarray] | None = None) -> float:
    """a0 = min(1/max|H|, half the smallest non-local self-distance).

    With ``halves`` the self-distance is taken within each half separately,
    so that designed contacts between the halves do not collapse a0.
    """
    hmax = float(np.max(np.abs(curve.curvature)))
    r_curv = 1.0 / hmax if hmax > 0 else np.inf
    if halves is None:
        halves = [np.ones(curve.n, dtype=bool)]
    gap = np.inf
    for mask in halves:
        gap = min(gap, _nonlocal_node_gap(curve, np.asarray(mask, dtype=bool), np.pi * min(r_curv, curve.length / (2 * np.pi))))
    return float(min(r_curv, 0.5 * gap))


def _nonlocal_node_gap(curve: ClosedCurve, mask: np.ndarray, min_arc: float) -> float:
    idx = np.flatnonzero(mask)
    if idx.size < 2:
        return np.inf
    pts = curve.points[idx]
    ell = curve.arclength()[idx]
    total = curve.length
    best = np.inf
    for start in range(0, idx.size, 512):
        blk = slice(start, start + 512)
        d = np.hypot(pts[blk, None, 0] - pts[None, :, 0], pts[blk, None, 1] - pts[None, :, 1])
        sep = np.abs(ell[blk, None] - ell[None, :])
        sep = np.minimum(sep, total - sep)
        d[sep < min_arc] = np.inf
        best = min(best, float(d.min()))
    return best


def graph_to_curve(frame: ReferenceFrame, rho: np.ndarray, check: bool = True) -> ClosedCurve:
    """F = F0 - rho N0. Positive rho moves against the inner normal."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (frame.n,):
        raise GeometryError("rho must have one value per frame node")
    if check and np.max(np.abs(rho)) > frame.a0 / 4 * (1 + 1e-12):
        raise RebaselineRequired(f"|rho|_inf = {np.max(np.abs(rho)):.3g} exceeds a0/4 = {frame.a0 / 4:.3g}")
    return ClosedCurve(frame.base.points - rho[:, None] * frame.base.normal)


def curve_to_graph(frame: ReferenceFrame, curve: ClosedCurve, tangential_tol: float | None = None) -> np.ndarray:
    """rho = (F0 - F | N0) at every node."""
    if curve.n != frame.n:
        raise GeometryError("curve and frame node counts differ")
    diff = frame.base.points - curve.points
    rho = np.einsum("ij,ij->i", diff, frame.base.normal)
    if np.max(np.abs(rho)) > frame.a0:
        raise RebaselineRequired("curve leaves the tubular neighbourhood")
    if tangential_tol is not None:
        tang = np.einsum("ij,ij->i", diff, frame.base.tangent)
        if np.max(np.abs(tang)) > tangential_tol:
            raise RebaselineRequired("curve is not a normal graph over the frame")
    return rho


# --------------------------------------------------------------------------
# resampling


def arclength_map(curve: ClosedCurve, weight: Callable[[np.ndarray], np.ndarray] | None = None):
    """(ell, density, total): the (weighted) arclength of the trig interpolant
    as a function of the parameter, its derivative, and its total."""

    def density(s: np.ndarray) -> np.ndarray:
        d1 = trig_interpolate(curve.points, s, derivative=1)
        sp = np.hypot(d1[:, 0], d1[:, 1])
        if weight is None:
            return sp
        return sp * weight(trig_interpolate(curve.points, s))

    # spectral integration of the density on a fine grid
    m = 4 * curve.n
    fine = 2 * np.pi * np.arange(m) / m
    dens_fine = density(fine)
    mean = float(np.mean(dens_fine))
    periodic = cumulative_integral(dens_fine) - mean * fine

    def ell(s: np.ndarray) -> np.ndarray:
        return mean * s + trig_interpolate(periodic, s)

    return ell, density, mean * 2 * np.pi


def resample_parameters(curve: ClosedCurve, n: int, weight: Callable[[np.ndarray], np.ndarray] | None = None,
                        anchor: float = 0.0, tol: float = 1e-13) -> np.ndarray:
    """Parameters of n points equispaced in (weighted) arclength, starting at ``anchor``."""
    if n % 2:
        raise GeometryError("node count must be even")
    hmax = float(np.max(np.abs(curve.curvature)))
    if n < 16 * curve.length * hmax / (2 * np.pi) and weight is None:
        raise GeometryError(f"{n} nodes cannot resolve the curvature (need >= {16 * curve.length * hmax / (2 * np.pi):.0f})")
    ell, density, total = arclength_map(curve, weight)
    targets = ell(np.array([anchor]))[0] + total * np.arange(n) / n
    # monotone linear interpolation as the initial guess, then Newton
    m = 4 * curve.n
    grid_s = 2 * np.pi * np.arange(m + 1) / m
    grid_ell = ell(grid_s)
    s_new = np.interp(np.mod(targets, total), grid_ell, grid_s) + 2 * np.pi * np.floor(targets / total)
    for _ in range(50):
        step = (ell(s_new) - targets) / density(s_new)
        s_new = s_new - step
        if np.max(np.abs(step)) < tol:
            break
    return s_new


def resample(curve: ClosedCurve, n: int, weight: Callable[[np.ndarray], np.ndarray] | None = None,
             anchor: float = 0.0, tol: float = 1e-13) -> ClosedCurve:
    """Resample so that nodes are equispaced in (weighted) arclength.

    ``weight`` maps an (M, 2) array of positions to a positive node density;
    spacing is proportional to 1/weight. ``anchor`` is the parameter of the old
    curve that becomes the new node 0.
    """
    return ClosedCurve(trig_interpolate(curve.points, resample_parameters(curve, n, weight, anchor, tol)))


def resample_arclength(curve: ClosedCurve, n: int) -> ClosedCurve:
    """Uniform-arclength resampling, anchored at the current node 0."""
    return resample(curve, n)


# --------------------------------------------------------------------------
# self-intersections


@dataclass(frozen=True)
class Intersections:
    crossings: list[tuple[int, int, tuple[float, float]]]
    min_gap: float

    @property
    def embedded(self) -> bool:
        return not self.crossings


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _segments_cross(p1, p2, q1, q2, tol: float = 1e-9):
    """Transversal crossing test for arrays of segments; also returns the point."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    lp = np.hypot(*(p2 - p1).T)
    lq = np.hypot(*(q2 - q1).T)
    # orientation = segment length * offset; offsets below tol count as touching
    hit = (d1 * d2 < 0) & (d3 * d4 < 0)
    hit &= (np.abs(d1) > tol * lq) & (np.abs(d2) > tol * lq) & (np.abs(d3) > tol * lp) & (np.abs(d4) > tol * lp)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = d1 / (d1 - d2)
    point = p1 + t[:, None] * (p2 - p1)
    return hit, point


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def segment_distance(p1, p2, q1, q2) -> np.ndarray:
    """Euclidean distance between arrays of segments (0 where they cross)."""
    p1, p2, q1, q2 = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (p1, p2, q1, q2))
    d = np.minimum.reduce([
        _point_segment_distance(p1, q1, q2),
        _point_segment_distance(p2, q1, q2),
        _point_segment_distance(q1, p1, p2),
        _point_segment_distance(q2, p1, p2),
    ])
    hit, _ = _segments_cross(p1, p2, q1, q2, tol=0.0)
    return np.where(hit, 0.0, d)


def _local_arc(curve: ClosedCurve) -> float:
    hmax = float(np.max(np.abs(curve.curvature)))
    r = 1.0 / hmax if hmax > 0 else np.inf
    return float(np.pi * min(r, curve.length / (2 * np.pi)))


def _candidate_pairs(points: np.ndarray) -> np.ndarray:
    """Non-adjacent segment pairs whose midpoints are within the longest
    segment length of each other (a superset of all intersecting pairs)."""
    n = points.shape[0]
    b = np.roll(points, -1, axis=0)
    reach = float(np.max(np.hypot(*(b - points).T))) * 1.0001
    arr = cKDTree(0.5 * (points + b)).query_pairs(reach, output_type="ndarray")
    if arr.size == 0:
        return np.zeros((0, 2), dtype=int)
    arr = np.sort(arr, axis=1)
    gap = (arr[:, 1] - arr[:, 0]) % n
    keep = (gap > 1) & (gap < n - 1)
    arr = arr[keep]
    return arr[np.lexsort((arr[:, 1], arr[:, 0]))]


def _crossings_for_pairs(points: np.ndarray, pairs: np.ndarray, tol: float):
    if pairs.size == 0:
        return []
    nxt = np.roll(points, -1, axis=0)
    i, j = pairs[:, 0], pairs[:, 1]
    hit, pt = _segments_cross(points[i], nxt[i], points[j], nxt[j], tol)
    return [(int(a), int(b), (float(p[0]), float(p[1]))) for a, b, p in zip(i[hit], j[hit], pt[hit])]


def brute_force_crossings(points: np.ndarray, tol: float = 1e-9):
    """O(N^2) reference: transversal crossings of all non-adjacent segment pairs."""
    n = points.shape[0]
    i, j = np.triu_indices(n, k=2)
    keep = (j - i) < n - 1
    return _crossings_for_pairs(np.asarray(points, float), np.column_stack([i[keep], j[keep]]), tol)


def self_intersections(curve: ClosedCurve, tol: float = 1e-9) -> Intersections:
    """Transversal self-crossings of the closing polyline and its minimum gap.

    The gap is the smallest distance between segments whose along-curve
    separation exceeds pi times the smallest radius of curvature, so that
    neighbouring segments on a smooth arc do not count as a gap.
    """
    pts = curve.points
    crossings = _crossings_for_pairs(pts, _candidate_pairs(pts), tol)
    return Intersections(crossings=crossings, min_gap=min_gap(curve))


def min_gap(curve: ClosedCurve, mask: np.ndarray | None = None, other: np.ndarray | None = None) -> float:
    """Minimum distance between non-local polyline segments.

    With ``mask`` and ``other`` only segments starting at nodes of ``mask``
    versus nodes of ``other`` are compared.
    """
    pts = curve.points
    n = curve.n
    nxt = np.roll(pts, -1, axis=0)
    ell = curve.arclength()
    total = curve.length
    min_arc = _local_arc(curve)
    rows = np.arange(n) if mask is None else np.flatnonzero(mask)
    cols = np.arange(n) if other is None else np.flatnonzero(other)
    if rows.size == 0 or cols.size == 0:
        return np.inf
    h = float(np.max(curve.weights)) * 2.0
    cand_i, cand_j, cand_d = [], [], []
    for start in range(0, rows.size, 512):
        r = rows[start:start + 512]
        d = np.hypot(pts[r, None, 0] - pts[None, cols, 0], pts[r, None, 1] - pts[None, cols, 1])
        sep = np.abs(ell[r, None] - ell[None, cols])
        sep = np.minimum(sep, total - sep)
        d[sep < min_arc] = np.inf
        jj = np.argmin(d, axis=1)
        cand_i.append(r)
        cand_j.append(cols[jj])
        cand_d.append(d[np.arange(r.size), jj])
    ci, cj, cd = (np.concatenate(v) for v in (cand_i, cand_j, cand_d))
    if not np.isfinite(cd).any():
        return np.inf
    near = cd <= cd.min() + h
    # segments on either side of each candidate node pair
    i = ci[near][:, None] + np.array([-1, -1, 0, 0])
    j = cj[near][:, None] + np.array([-1, 0, -1, 0])
    a, b = i.ravel() % n, j.ravel() % n
    return float(np.min(segment_distance(pts[a], nxt[a], pts[b], nxt[b])))


# --------------------------------------------------------------------------
# serialization


def write_curve_csv(curve: ClosedCurve, path: str | Path, extra: dict[str, np.ndarray] | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "x", "y", *extra.keys()])
        cols = [curve.s, curve.x, curve.y, *extra.values()]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return format(float(v), ".17g")


def read_curve_csv(path: str | Path) -> ClosedCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"x", "y"} <= set(rows[0]):
        raise GeometryError(f"{path}: expected columns s,x,y")
    return ClosedCurve(np.array([[float(r["x"]), float(r["y"])] for r in rows]))
