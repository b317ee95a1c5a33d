"""Interior Laplace problem with Robin condition u - d_N u = H on a closed curve.

u is represented as a modified single-layer potential

    u(x) = int (G(x, y) + 1) sigma(y) ds_y,   G(x, y) = -ln|x - y| / (2 pi),

whose interior trace and normal derivative give the second-kind equation

    (1/2) sigma + K' sigma + S sigma + int sigma = H.

The extra constant kernel keeps the operator injective on curves of
logarithmic capacity one (e.g. the unit circle), where S alone annihilates
constants. The log-singular part of S uses Kress' product quadrature; K' has
a smooth kernel with diagonal limit -curvature / (4 pi).
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve
from scipy.signal import resample

from .geometry import ClosedCurve, min_gap


class RobinSolveError(RuntimeError):
    """The discrete Robin system is singular or the solve is inaccurate."""


class IllConditioningWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    # smallest regularization gap used to open touching bridges
    eta_min: float = 1e-3
    # opening gap in units of the local node spacing
    eta_spacing_factor: float = 2.0
    residual_rtol: float = 1e-10
    # points closer than this many node spacings use extrapolation
    near_factor: float = 5.0

    def validate(self) -> None:
        if self.eta_min <= 0 or self.eta_spacing_factor <= 0 or self.residual_rtol <= 0 or self.near_factor <= 0:
            raise ValueError("solver tolerances must be positive")


@functools.lru_cache(maxsize=8)
def kress_weights(n: int) -> np.ndarray:
    """Circulant Kress weights: sum_j R[i, j] f_j ~ int ln(4 sin^2((t_i - s)/2)) f(s) ds."""
    half = n // 2
    t = 2 * np.pi * np.arange(n) / n
    m = np.arange(1, half)
    row = -(4 * np.pi / n) * (np.cos(np.outer(t, m)) @ (1.0 / m)) - (4 * np.pi / n**2) * np.cos(half * t)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    out = row[idx]
    out.setflags(write=False)
    return out


def regularization_floor(curve: ClosedCurve, nodes: np.ndarray | None = None, minimum: float = 1e-3,
                         factor: float = 2.0) -> float:
    """eta_reg = max(minimum, factor * node spacing) with spacing taken over ``nodes``."""
    h = curve.node_spacing if nodes is None else curve.node_spacing[nodes]
    return float(max(minimum, factor * np.max(h)))


@dataclass(frozen=True, eq=False)
class RobinSystem:
    curve: ClosedCurve
    single: np.ndarray  # modified single layer S + int, trace operator
    adjoint: np.ndarray  # K'
    matrix: np.ndarray
    lu: tuple
    condition: float

    @property
    def n(self) -> int:
        return self.curve.n


def assemble(curve: ClosedCurve, gap_floor: float | None = None, gap: float | None = None) -> RobinSystem:
    """Assemble the dense Robin system on ``curve``.

    If the curve's minimum non-local gap is below ``gap_floor`` an
    IllConditioningWarning with the estimated condition number is emitted.
    """
    n = curve.n
    pts = curve.points
    speed = curve.speed
    nu = -curve.normal  # outward normal
    kappa = curve.curvature
    w = curve.weights
    dx = pts[:, None, 0] - pts[None, :, 0]
    dy = pts[:, None, 1] - pts[None, :, 1]
    r2 = dx * dx + dy * dy
    np.fill_diagonal(r2, 1.0)
    t = 2 * np.pi * np.arange(n) / n
    diff_t = t[:, None] - t[None, :]
    sin2 = 4.0 * np.sin(diff_t / 2) ** 2
    np.fill_diagonal(sin2, 1.0)
    smooth = -np.log(r2 / sin2) / (4 * np.pi)
    np.fill_diagonal(smooth, -np.log(speed**2) / (4 * np.pi))
    single = kress_weights(n) * (-speed / (4 * np.pi))[None, :] + smooth * w[None, :]
    single += w[None, :]
    adj = -(dx * nu[:, None, 0] + dy * nu[:, None, 1]) / r2 / (2 * np.pi)
    np.fill_diagonal(adj, -kappa / (4 * np.pi))
    adj *= w[None, :]
    matrix = 0.5 * np.eye(n) + adj + single
    if not np.all(np.isfinite(matrix)):
        raise RobinSolveError("non-finite entries in the Robin system")
    lu = lu_factor(matrix, check_finite=False)
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.max(np.abs(matrix))):
        raise RobinSolveError("Robin system is singular")
    anorm = np.max(np.sum(np.abs(matrix), axis=0))
    rcond, info = lapack.dgecon(lu[0], anorm, norm="1")
    condition = float(1.0 / rcond) if rcond > 0 else np.inf
    if gap_floor is not None:
        g = min_gap(curve) if gap is None else gap
        if g < gap_floor:
            warnings.warn(IllConditioningWarning(
                f"boundary segments {g:.3g} apart (floor {gap_floor:.3g}); condition estimate {condition:.3g}"),
                stacklevel=2)
    return RobinSystem(curve, single, adj, matrix, lu, condition)


def solve_robin(system: RobinSystem, h: np.ndarray, rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Return the boundary trace u and the layer density sigma."""
    h = np.asarray(h, dtype=float)
    if h.shape != (system.n,):
        raise ValueError("boundary data must have one value per node")
    sigma = lu_solve(system.lu, h, check_finite=False)
    resid = system.matrix @ sigma - h
    scale = max(np.max(np.abs(h)), 1e-300)
    if not np.all(np.isfinite(sigma)) or np.max(np.abs(resid)) > rtol * scale:
        raise RobinSolveError(f"Robin residual {np.max(np.abs(resid)) / scale:.3g} too large")
    u = system.single @ sigma
    return u, sigma


def inside(curve: ClosedCurve, points: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test against the node polyline."""
    p = np.atleast_2d(np.asarray(points, float))
    a = curve.points
    b = np.roll(a, -1, axis=0)
    px, py = p[:, 0:1], p[:, 1:2]
    cond = (a[None, :, 1] > py) != (b[None, :, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[None, :, 0] + (py - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (b[None, :, 1] - a[None, :, 1])
    crossings = np.sum(cond & (px < xint), axis=1)
    return crossings % 2 == 1


def _potential(src: np.ndarray, w: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 256):
        p = points[start:start + 256]
        r2 = (p[:, None, 0] - src[None, :, 0]) ** 2 + (p[:, None, 1] - src[None, :, 1]) ** 2
        out[start:start + 256] = (-np.log(r2) / (4 * np.pi) + 1.0) @ w
    return out


def _upsampled(system: RobinSystem, sigma: np.ndarray, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weighted density of the spectrally upsampled boundary."""
    curve = system.curve
    if factor == 1:
        return curve.points, curve.weights * sigma
    m = curve.n * factor
    fine = ClosedCurve(resample(curve.points, m, axis=0))
    return fine.points, fine.weights * resample(sigma, m)


def boundary_distance(curve: ClosedCurve, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to the node polyline and the nearest node index."""
    a = curve.points
    b = np.roll(a, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    dist = np.empty(points.shape[0])
    node = np.empty(points.shape[0], dtype=int)
    for k, p in enumerate(points):
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
        d = np.hypot(*(p - a - t[:, None] * ab).T)
        j = int(np.argmin(d))
        dist[k] = d[j]
        node[k] = j if t[j] < 0.5 else (j + 1) % curve.n
    return dist, node


def eval_interior(system: RobinSystem, sigma: np.ndarray, points, near_factor: float = 5.0,
                  order: int = 6, max_upsample: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate u at interior points.

    Returns (values, outside_flag); points outside the domain get NaN. The
    boundary rule is upsampled spectrally until the point is at least
    near_factor local spacings away; points closer than that even at
    ``max_upsample`` are evaluated on a line of shifted points further inside
    and extrapolated back along the inward normal of the nearest node.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    curve = system.curve
    flag = ~inside(curve, pts)
    vals = np.full(pts.shape[0], np.nan)
    idx = np.flatnonzero(~flag)
    if idx.size == 0:
        return vals, flag
    dist, node = boundary_distance(curve, pts[idx])
    h = curve.node_spacing[node]
    need = near_factor * h / np.maximum(dist, 1e-300)
    factor = np.where(need <= 1, 1, 2 ** np.ceil(np.log2(np.maximum(need, 1)))).astype(int)
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def rule(f: int):
        if f not in cache:
            cache[f] = _upsampled(system, sigma, f)
        return cache[f]

    for f in np.unique(factor[factor <= max_upsample]):
        sel = factor == f
        vals[idx[sel]] = _potential(*rule(int(f)), pts[idx[sel]])
    src, w = rule(max_upsample)
    for k in np.flatnonzero(factor > max_upsample):
        i, j = idx[k], node[k]
        normal = curve.normal[j]
        he = h[k] / max_upsample
        offset = float(np.dot(pts[i] - curve.points[j], normal))
        shifts = near_factor * he + he * np.arange(order)
        probes = pts[i] + (shifts - offset)[:, None] * normal
        coeffs = np.polyfit(shifts - offset, _potential(src, w, probes), order - 1)
        vals[i] = np.polyval(coeffs, 0.0)
    return vals, flag


@dataclass(frozen=True)
class Energies:
    dirichlet: float
    robin: float
    bound: float

    @property
    def ok(self) -> bool:
        return 0.0 <= self.robin <= self.bound * (1 + 1e-9) + 1e-9


def energy_diagnostics(curve: ClosedCurve, u: np.ndarray, h: np.ndarray) -> Energies:
    """Dirichlet energy via Green's identity and the Robin condition,
    int |grad u|^2 = int_gamma u (H - u), plus the a-priori bound 1/2 int H^2."""
    w = curve.weights
    dirichlet = float(np.sum(u * (h - u) * w))
    robin = dirichlet + 0.5 * float(np.sum(u * u * w))
    bound = 0.5 * float(np.sum(h * h * w))
    return Energies(dirichlet, robin, bound)


def solve_curve(curve: ClosedCurve, h: np.ndarray | None = None, **kw) -> tuple[RobinSystem, np.ndarray, np.ndarray]:
    """Assemble and solve with curvature data (or ``h``) in one call."""
    system = assemble(curve, **kw)
    u, sigma = solve_robin(system, curve.curvature if h is None else h)
    return system, u, sigma
