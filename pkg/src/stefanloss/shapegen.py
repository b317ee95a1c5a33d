"""Initial interfaces: a ring-shaped liquid domain whose two arms end in unit
caps that touch (or nearly touch) along a short flat bridge.

Layout, traversed counterclockwise from the centre of the upper bridge flat at
(x0, gap) heading +x::

    upper flat half | quarter cap (r=1) | outer upper arc (R1) | outer vertical
    | outer lower arc (R1) | quarter cap | lower flat | quarter cap
    | inner lower arc (-1/R2) | inner vertical | inner upper arc (-1/R2)
    | quarter cap | upper flat half

with R1 = R + 1 + delta/2 and R2 = R - 1 - delta/2 centred on x0 - R. The
total turning is exactly 2*pi; the curve is mirror symmetric about y = 0.
The piecewise constant curvature is mollified, integrated by arclength, closed
by adjusting the two vertical segments and finally resampled with nodes
clustered around the bridge.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import (
    ClosedCurve,
    circle,
    ReferenceFrame,
    cumulative_integral,
    trig_interpolate,
    tubular_radius,
)


class ShapeError(ValueError):
    """Inconsistent shape specification or failed construction stage."""


@dataclass(frozen=True)
class ShapeSpec:
    R: float = 10.0
    delta: float = 0.2
    x0: float = 2.0
    zeta: float = 0.05
    gap: float = 0.0
    nodes: int = 1024
    # node density near the bridge relative to the far field, and its radius
    refine: float = 60.0
    refine_width: float = 1.0
    # collar of the bridge windows beyond the flat part, in units of zeta
    collar: float = 2.0
    # resolution of the arclength grid used for integration
    fine_nodes: int = 2**16

    def validate(self) -> None:
        if self.R < 4:
            raise ShapeError("R must be at least 4")
        if not 0 <= self.delta <= 0.5:
            raise ShapeError("delta must lie in [0, 0.5]")
        if self.zeta <= 0 or (self.delta > 0 and self.zeta > self.delta / 2):
            raise ShapeError("need 0 < zeta <= delta/2")
        if not 0 <= self.gap <= 0.1:
            raise ShapeError("gap must lie in [0, 0.1]")
        if self.nodes % 2 or self.nodes < 16:
            raise ShapeError("nodes must be even and >= 16")
        if self.x0 - self.delta / 2 <= 0:
            raise ShapeError("the bridge must lie in x > 0")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.R


@dataclass(frozen=True)
class CurvatureProfile:
    """Piecewise constant curvature J over one period of arclength.

    Piece k covers [starts[k], starts[k] + lengths[k]); the first piece may
    start at a negative position so that arclength 0 sits at the bridge centre.
    """

    starts: np.ndarray
    lengths: np.ndarray
    values: np.ndarray
    kinds: tuple[str, ...]

    @property
    def total_length(self) -> float:
        return float(np.sum(self.lengths))

    @property
    def breakpoints(self) -> np.ndarray:
        return np.append(self.starts, self.starts[-1] + self.lengths[-1])

    @property
    def turning(self) -> float:
        return float(np.sum(self.values * self.lengths))

    def with_lengths(self, lengths: np.ndarray) -> "CurvatureProfile":
        lengths = np.asarray(lengths, dtype=float)
        starts = self.starts[0] + np.concatenate([[0.0], np.cumsum(lengths[:-1])])
        return CurvatureProfile(starts, lengths, self.values.copy(), self.kinds)

    def evaluate(self, ell: np.ndarray) -> np.ndarray:
        """Unmollified J at arclength positions (periodic)."""
        ell = self.starts[0] + np.mod(np.asarray(ell, float) - self.starts[0], self.total_length)
        idx = np.searchsorted(self.breakpoints, ell, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    @classmethod
    def single_arc(cls, radius: float = 1.0) -> "CurvatureProfile":
        return cls(np.array([0.0]), np.array([2 * np.pi * radius]), np.array([1.0 / radius]), ("arc",))


def build_profile(spec: ShapeSpec) -> CurvatureProfile:
    spec.validate()
    d = spec.delta
    r1 = spec.R + 1 + d / 2
    r2 = spec.R - 1 - d / 2
    vert = 2.0 + 2.0 * spec.gap
    q = np.pi / 2
    pieces = [
        ("flat_upper", d, 0.0),
        ("cap", q, 1.0),
        ("outer_arc", np.pi * r1, 1.0 / r1),
        ("outer_vertical", vert, 0.0),
        ("outer_arc", np.pi * r1, 1.0 / r1),
        ("cap", q, 1.0),
        ("flat_lower", d, 0.0),
        ("cap", q, 1.0),
        ("inner_arc", np.pi * r2, -1.0 / r2),
        ("inner_vertical", vert, 0.0),
        ("inner_arc", np.pi * r2, -1.0 / r2),
        ("cap", q, 1.0),
    ]
    if d == 0:
        pieces = [p for p in pieces if not p[0].startswith("flat")]
    kinds = tuple(p[0] for p in pieces)
    lengths = np.array([p[1] for p in pieces], dtype=float)
    values = np.array([p[2] for p in pieces], dtype=float)
    first = -d / 2 if d > 0 else 0.0
    starts = first + np.concatenate([[0.0], np.cumsum(lengths[:-1])])
    prof = CurvatureProfile(starts, lengths, values, kinds)
    if abs(prof.turning - 2 * np.pi) > 1e-12:
        raise ShapeError("profile turning differs from 2*pi")
    return prof


# --------------------------------------------------------------------------
# mollification


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@functools.lru_cache(maxsize=1)
def _bump_mass() -> float:
    return float(np.sum(_GL_WEIGHTS * _bump(_GL_NODES)))


def mollifier(t: np.ndarray, width: float) -> np.ndarray:
    """Standard C-infinity bump supported on [-width, width] with unit mass."""
    return _bump(np.asarray(t, float) / width) / (width * _bump_mass())


def bump_cdf(x: np.ndarray) -> np.ndarray:
    """int_{-1}^x of the unit-mass bump, by Gauss-Legendre on [-1, x]."""
    x = np.clip(np.asarray(x, float), -1.0, 1.0)
    half = (x + 1.0) / 2.0
    t = -1.0 + half[..., None] * (_GL_NODES + 1.0)
    return half * np.sum(_GL_WEIGHTS * _bump(t), axis=-1) / _bump_mass()


def mollify_profile(profile: CurvatureProfile, zeta: float, ell: np.ndarray) -> np.ndarray:
    """Periodic convolution of J with the width-zeta mollifier, sampled at ell.

    Each constant piece contributes J_k (Phi((l - a_k)/zeta) - Phi((l - b_k)/zeta)),
    so the convolution is evaluated exactly up to quadrature of the bump CDF.
    """
    if zeta <= 0:
        raise ShapeError("zeta must be positive")
    shortest = _shortest_piece(profile)
    if zeta > shortest:
        raise ShapeError(f"zeta = {zeta} exceeds the shortest constant piece ({shortest:.3g})")
    ell = np.asarray(ell, dtype=float)
    total = profile.total_length
    out = np.zeros_like(ell)
    for a, length, val in zip(profile.starts, profile.lengths, profile.values):
        b = a + length
        for shift in (-total, 0.0, total):
            lo = (ell - a - shift) / zeta
            hi = (ell - b - shift) / zeta
            near = (lo > -1) & (hi < 1)
            if not near.any():
                continue
            out[near] += val * (bump_cdf(lo[near]) - bump_cdf(hi[near]))
    return out


def _shortest_piece(profile: CurvatureProfile) -> float:
    # adjacent pieces with equal curvature form one constant piece
    lengths = list(profile.lengths)
    values = list(profile.values)
    merged = []
    for length, val in zip(lengths, values):
        if merged and merged[-1][1] == val:
            merged[-1][0] += length
        else:
            merged.append([length, val])
    if len(merged) > 1 and merged[0][1] == merged[-1][1]:
        merged[0][0] += merged.pop()[0]
    return min(m[0] for m in merged)


# --------------------------------------------------------------------------
# integration and closure


@dataclass(frozen=True)
class IntegratedCurve:
    """Arclength-parameterised curve on a uniform grid of one period."""

    points: np.ndarray
    length: float
    closure_defect: np.ndarray
    angle: np.ndarray

    @property
    def defect_norm(self) -> float:
        return float(np.hypot(*self.closure_defect))

    def as_curve(self) -> ClosedCurve:
        return ClosedCurve(self.points)


def integrate_curve(curvature: np.ndarray, length: float, anchor: tuple[float, float] = (0.0, 0.0),
                    angle: float = 0.0, turning_tol: float = 1e-6) -> IntegratedCurve:
    """theta = angle + int H, G = anchor + int (cos theta, sin theta).

    ``curvature`` holds samples at arclength length*i/M. The closure defect
    G(L) - G(0) is reported, not removed.
    """
    h = np.asarray(curvature, dtype=float)
    m = h.size
    scale = length / (2 * np.pi)
    turning = float(np.mean(h) * length)
    if abs(turning - 2 * np.pi) > turning_tol:
        raise ShapeError(f"turning number defect {turning - 2 * np.pi:.3g}")
    theta = angle + cumulative_integral(h) * scale
    tang = np.column_stack([np.cos(theta), np.sin(theta)])
    pts = np.asarray(anchor, float) + cumulative_integral(tang) * scale
    defect = np.mean(tang, axis=0) * length
    return IntegratedCurve(pts, length, defect, theta)


def fine_grid_size(spec: ShapeSpec, total: float) -> int:
    """spec.fine_nodes, doubled until the mollifier width spans 24 grid cells."""
    m = spec.fine_nodes
    while total / m > spec.zeta / 24:
        m *= 2
    return m


def _integrate_profile(profile: CurvatureProfile, spec: ShapeSpec) -> IntegratedCurve:
    total = profile.total_length
    m = fine_grid_size(spec, total)
    ell = total * np.arange(m) / m
    h = mollify_profile(profile, spec.zeta, ell)
    return integrate_curve(h, total, anchor=(spec.x0, spec.gap), angle=0.0)


def close_correction(profile: CurvatureProfile, spec: ShapeSpec, max_iter: int = 50,
                     tol: float = 1e-9, max_defect: float = 0.1) -> tuple[CurvatureProfile, IntegratedCurve]:
    """Close the mollified curve by lengthening/shortening the straight pieces.

    Unknowns are the outer and inner vertical segment lengths. Equations: the
    lower bridge centre sits at y = -gap (fixes the outer path) and the y
    closure defect vanishes (fixes the inner path). The x defect vanishes by
    mirror symmetry of the profile and is only checked. Curved and bridge
    pieces stay untouched.
    """
    cur = _integrate_profile(profile, spec)
    if cur.defect_norm >= max_defect:
        raise ShapeError(f"closure defect {cur.defect_norm:.3g} too large to correct")
    adjustable = [i for i, k in enumerate(profile.kinds) if k in ("outer_vertical", "inner_vertical")]
    if len(adjustable) != 2:
        if cur.defect_norm <= tol:
            return profile, cur
        raise ShapeError("profile has no adjustable straight segments")
    lower = _lower_bridge_centre(profile)

    def residual(prof: CurvatureProfile) -> tuple[np.ndarray, IntegratedCurve]:
        fine = _integrate_profile(prof, spec)
        m = fine.points.shape[0]
        y_low = trig_interpolate(fine.points[:, 1], np.array([2 * np.pi * lower / fine.length]))[0]
        return np.array([y_low + spec.gap, fine.closure_defect[1]]), fine

    lengths = profile.lengths.copy()
    res, cur = residual(profile)
    for _ in range(max_iter):
        if np.max(np.abs(res)) <= tol:
            break
        jac = np.zeros((2, 2))
        h = 1e-4
        for col, idx in enumerate(adjustable):
            trial = lengths.copy()
            trial[idx] += h
            jac[:, col] = (residual(profile.with_lengths(trial))[0] - res) / h
        lengths[adjustable] += np.linalg.solve(jac, -res)
        if np.any(lengths <= 0):
            raise ShapeError("closure correction produced a non-positive segment length")
        res, cur = residual(profile.with_lengths(lengths))
    if np.max(np.abs(res)) > tol or cur.defect_norm > 10 * tol:
        raise ShapeError(f"closure correction did not converge (defect {cur.defect_norm:.3g})")
    return profile.with_lengths(lengths), cur


# --------------------------------------------------------------------------
# full pipeline


def _von_mises(ell: np.ndarray, centre: float, width: float, period: float) -> np.ndarray:
    """Smooth periodic bump of roughly Gaussian shape with the given width."""
    kappa = (period / (2 * np.pi * width)) ** 2
    return np.exp(kappa * (np.cos(2 * np.pi * (ell - centre) / period) - 1.0))


def graded_arclength(length: float, lower: float, n: int, refine: float, width: float,
                     fine: int = 2**12) -> np.ndarray:
    """Arclength positions of n nodes clustered around the two bridge centres.

    Node 0 sits at arclength 0 (upper bridge) and node n/2 at ``lower``. The
    density is 1 + refine*(bumps at both bridges) + beta*(wide bump on the
    shorter half), with beta chosen so that both halves carry n/2 nodes. The
    density is symmetric under l -> lower - l, hence so are the nodes.
    """
    inner_mid = lower + (length - lower) / 2
    outer_mid = lower / 2
    shorter_inner = (length - lower) < lower
    mid, half_len = (inner_mid, length - lower) if shorter_inner else (outer_mid, lower)
    fine = max(fine, int(2 ** np.ceil(np.log2(8 * length / width))))
    ell = length * np.arange(fine) / fine

    def base_fn(x):
        return 1.0 + refine * (_von_mises(x, 0.0, width, length) + _von_mises(x, lower, width, length))

    def extra_fn(x):
        return _von_mises(x, mid, half_len / 6, length)

    def antiderivative(w: np.ndarray):
        # exact integral of the trig interpolant of w from 0 to arbitrary l
        mean = float(np.mean(w))
        periodic = cumulative_integral(w) * length / (2 * np.pi) - mean * ell

        def at(x):
            return mean * x + trig_interpolate(periodic, 2 * np.pi * np.asarray(x) / length)

        return at, mean * length, mean * ell + periodic

    base_at, base_total, base_cum = antiderivative(base_fn(ell))
    extra_at, extra_total, extra_cum = antiderivative(extra_fn(ell))
    b1 = float(base_at(np.array([lower]))[0])
    e1 = float(extra_at(np.array([lower]))[0])
    b2, e2 = base_total - b1, extra_total - e1
    beta = (b1 - b2) / (e2 - e1)
    if beta < 0:
        raise ShapeError("cannot balance node density between the two halves")
    total = base_total + beta * extra_total
    cum = base_cum + beta * extra_cum
    targets = total * np.arange(n) / n
    pos = np.interp(targets, np.append(cum, total), np.append(ell, length))
    for _ in range(30):
        step = (base_at(pos) + beta * extra_at(pos) - targets) / (base_fn(pos) + beta * extra_fn(pos))
        pos = pos - step
        if np.max(np.abs(step)) < 1e-13 * length:
            break
    return pos


@dataclass(frozen=True)
class Dumbbell:
    curve: ClosedCurve
    frame: ReferenceFrame
    spec: ShapeSpec
    profile: CurvatureProfile
    node_arclength: np.ndarray = field(repr=False)
    closure_defect_before: float = 0.0


def window_indices(node_arclength: np.ndarray, centre: float, half_width: float, total: float) -> np.ndarray:
    d = np.mod(node_arclength - centre + total / 2, total) - total / 2
    return np.flatnonzero(np.abs(d) <= half_width)


def half_masks(n: int, margin: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """X+ and X- as parameter ranges: node 0 sits on the upper bridge, node
    N/2 on the lower one, and the mirror map is s -> pi - s."""
    s = 2 * np.pi * np.arange(n) / n
    return np.cos(s) >= -margin, np.cos(s) <= margin


@functools.lru_cache(maxsize=32)
def make_dumbbell(spec: ShapeSpec) -> Dumbbell:
    spec.validate()
    profile = build_profile(spec)
    raw = _integrate_profile(profile, spec)
    closed_profile, fine = close_correction(profile, spec)
    total = fine.length
    lower_centre = _lower_bridge_centre(closed_profile)
    ell_nodes = graded_arclength(total, lower_centre, spec.nodes, spec.refine, spec.refine_width)
    curve = ClosedCurve(_symmetrize(_spline(fine)(ell_nodes)))
    curve.validate()
    half = spec.delta / 2 + spec.collar * spec.zeta
    upper = window_indices(ell_nodes, 0.0, half, total)
    lower = window_indices(ell_nodes, lower_centre, half, total)
    up, lo = half_masks(spec.nodes)
    a0 = tubular_radius(curve, halves=[up, lo])
    frame = ReferenceFrame(curve, a0, upper, lower, up, lo)
    return Dumbbell(curve, frame, spec, closed_profile, ell_nodes, raw.defect_norm)


def _symmetrize(points: np.ndarray) -> np.ndarray:
    """Average each node with the mirror image of its partner N/2 - i, removing
    interpolation noise from the mirror symmetry."""
    n = points.shape[0]
    partner = (n // 2 - np.arange(n)) % n
    return 0.5 * (points + points[partner] * np.array([1.0, -1.0]))


def _spline(fine: IntegratedCurve) -> CubicSpline:
    m = fine.points.shape[0]
    ell = np.append(fine.length * np.arange(m) / m, fine.length)
    return CubicSpline(ell, np.vstack([fine.points, fine.points[:1]]), bc_type="periodic")


def _lower_bridge_centre(profile: CurvatureProfile) -> float:
    if "flat_lower" in profile.kinds:
        k = profile.kinds.index("flat_lower")
        return float(profile.starts[k] + profile.lengths[k] / 2)
    # without flats: end of the second cap (the lower lobe's top point)
    caps = [i for i, k in enumerate(profile.kinds) if k == "cap"]
    k = caps[1]
    return float(profile.starts[k] + profile.lengths[k])


def make_circle_frame(radius: float = 1.0, n: int = 256) -> ReferenceFrame:
    c = circle(radius, n)
    return ReferenceFrame(c, tubular_radius(c))


def spec_from_dict(d: dict) -> ShapeSpec:
    known = {f for f in ShapeSpec.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ShapeError(f"unknown shape keys: {sorted(unknown)}")
    return replace(ShapeSpec(), **d)
