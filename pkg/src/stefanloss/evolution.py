"""Time stepping of the normal-graph evolution rho' = lambda (-H + u~).

H and lambda come from the uncut curve F(rho); u~ solves the Robin problem on
the cut curve with the cut curvature as data. The second-order part
a(s) rho'' of -lambda H is treated implicitly with a dense spectral
second-derivative matrix, everything else explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ClosedCurve,
    GeometryError,
    ReferenceFrame,
    RebaselineRequired,
    cyclic_order,
    differentiation_matrix,
    graph_to_curve,
    self_intersections,
    spectral_derivative,
    tubular_radius,
)
from .overlap import CutResult, cut, cut_curvature, detect_overlap, open_bridge, overlap_depth
from .robin import RobinSolveError, SolverConfig, assemble, regularization_floor, solve_robin


class EllipticityLost(RuntimeError):
    """The principal coefficient a(s) is not positive."""


@dataclass(frozen=True)
class StepConfig:
    dt: float = 1e-3
    omega: float = 1.0
    rebaseline_threshold: float = 0.25
    max_t: float = 1.0
    touch_tol: float = 1e-3
    overlap_depth_tol: float = 1e-3
    overlap_cap: float = 0.05
    picard: int = 0
    lambda_min: float = 0.5
    exact_principal: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def validate(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.rebaseline_threshold <= 0.25:
            raise ValueError("rebaseline threshold must lie in (0, 1/4]")
        if self.omega < 0 or self.max_t <= 0 or self.picard < 0:
            raise ValueError("invalid step configuration")
        if self.touch_tol <= 0 or self.overlap_depth_tol <= 0 or self.overlap_cap <= 0:
            raise ValueError("event tolerances must be positive")
        self.solver.validate()


def lambda_field(frame: ReferenceFrame, rho: np.ndarray, curve: ClosedCurve | None = None,
                 lambda_min: float = 0.5) -> np.ndarray:
    """1 / (N0 | N_F) with the normal of the uncut curve."""
    if not np.any(rho):
        return np.ones(frame.n)
    if curve is None:
        curve = graph_to_curve(frame, rho, check=False)
    dot = np.einsum("ij,ij->i", frame.base.normal, curve.normal)
    if np.min(dot) <= lambda_min:
        raise RebaselineRequired(f"graph too tilted: min (N0|N) = {np.min(dot):.3g}")
    return 1.0 / dot


def principal_coefficient(frame: ReferenceFrame, sigma: np.ndarray, lam: np.ndarray | None = None,
                          exact: bool = False) -> np.ndarray:
    """Coefficient a(s) of rho'' in -lambda H, linearized at sigma.

    The default normalizes by |F0'|^4, which is exact at sigma = 0 and good
    for small sigma. With ``exact`` the normalization is |F0'| |F_sigma'|^3,
    the true frozen coefficient; it keeps the implicit step stable when
    |sigma| times the curvature is no longer small.
    """
    base = frame.base
    x0, y0 = base.x, base.y
    dx, dy = base.derivative[:, 0], base.derivative[:, 1]
    sp = base.speed
    if lam is None:
        lam = lambda_field(frame, sigma)
    ty = spectral_derivative(y0 - sigma * dx / sp)
    tx = spectral_derivative(x0 + sigma * dy / sp)
    norm = sp**4 if not exact else sp * np.hypot(tx, ty) ** 3
    a = lam / norm * (dy * ty + dx * tx)
    if np.min(a) <= 0:
        raise EllipticityLost(f"principal coefficient min a = {np.min(a):.3g}")
    return a


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Everything the right-hand side needs at one state."""

    curve: ClosedCurve
    h: np.ndarray
    lam: np.ndarray
    cut: CutResult
    h_tilde: np.ndarray
    opened: ClosedCurve
    eta_reg: float
    u: np.ndarray
    sigma: np.ndarray
    condition: float
    min_gap: float
    embedded: bool
    overlap_depth: float
    bridge_sign: float

    @property
    def velocity(self) -> np.ndarray:
        return self.lam * (-self.h + self.u)

    @property
    def overlap_measure(self) -> float:
        return self.cut.overlap_measure


def evaluate(frame: ReferenceFrame, rho: np.ndarray, cfg: StepConfig) -> Evaluation:
    curve = graph_to_curve(frame, rho)
    h = curve.curvature
    lam = lambda_field(frame, rho, curve, cfg.lambda_min)
    res = cut(frame, rho)
    h_t = cut_curvature(h, res.mask)
    win = frame.window_mask
    if win.any():
        eta = regularization_floor(res.curve_tilde, win, cfg.solver.eta_min, cfg.solver.eta_spacing_factor)
        opened, _ = open_bridge(frame, res.curve_tilde, eta)
    else:
        eta, opened = 0.0, res.curve_tilde
    system = assemble(opened)
    u, sigma = solve_robin(system, h_t, cfg.solver.residual_rtol)
    inter = self_intersections(curve)
    centres = bridge_centres(frame)
    sign = float(np.min(u[centres] - h[centres])) if centres.size else float("nan")
    return Evaluation(curve, h, lam, res, h_t, opened, eta, u, sigma, system.condition, inter.min_gap, inter.embedded,
                      overlap_depth(frame, curve), sign)


def bridge_centres(frame: ReferenceFrame) -> np.ndarray:
    """Middle node of each bridge window."""
    out = [cyclic_order(idx, frame.n)[idx.size // 2] for idx in (frame.upper, frame.lower) if idx.size]
    return np.array(out, dtype=int)


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    step: int
    frame: ReferenceFrame
    rho: np.ndarray
    ev: Evaluation
    extended: bool = False
    rebaselines: int = 0

    @property
    def u(self) -> np.ndarray:
        return self.ev.u


def initial_state(frame: ReferenceFrame, cfg: StepConfig, rho: np.ndarray | None = None) -> SimState:
    rho = np.zeros(frame.n) if rho is None else np.asarray(rho, float)
    return SimState(0.0, 0, frame, rho, evaluate(frame, rho, cfg))


def implicit_update(rho: np.ndarray, f: np.ndarray, a: np.ndarray, dt: float, omega: float) -> np.ndarray:
    """Solve (I - dt (a D2 - omega)) rho1 = rho + dt (f - a D2 rho + omega rho)."""
    n = rho.size
    d2 = differentiation_matrix(n, 2)
    op = a[:, None] * d2
    op[np.diag_indices(n)] -= omega
    lhs = np.eye(n) - dt * op
    rhs = rho + dt * (f - op @ rho)
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise RobinSolveError(f"implicit step is singular: {exc}") from exc


def _propose(state: SimState, cfg: StepConfig) -> np.ndarray:
    ev = state.ev
    a = principal_coefficient(state.frame, state.rho, ev.lam, exact=cfg.exact_principal)
    rho1 = implicit_update(state.rho, ev.velocity, a, cfg.dt, cfg.omega)
    for _ in range(cfg.picard):
        ev1 = evaluate(state.frame, rho1, cfg)
        rho1 = implicit_update(state.rho, ev1.velocity, a, cfg.dt, cfg.omega)
    return rho1


def step_imex(state: SimState, cfg: StepConfig) -> SimState:
    limit = cfg.rebaseline_threshold * state.frame.a0
    try:
        rho1 = _propose(state, cfg)
        if np.max(np.abs(rho1)) > limit:
            raise RebaselineRequired("step leaves the admissible ball")
        ev1 = evaluate(state.frame, rho1, cfg)
    except RebaselineRequired:
        rebased = rebaseline(state, cfg, force=True)
        if rebased.frame is state.frame:
            raise
        state = rebased
        rho1 = _propose(state, cfg)
        ev1 = evaluate(state.frame, rho1, cfg)
    return replace(state, t=(state.step + 1) * cfg.dt, step=state.step + 1, rho=rho1, ev=ev1)


def rebaseline(state: SimState, cfg: StepConfig, force: bool = False) -> SimState:
    """Make the current uncut curve the new reference when rho grows large.

    Node parameters are kept (the graph moves nodes along the old normals
    only), so the bridge nodes and the window index sets carry over. In the
    extended regime the old frame is retained and the flag is set.
    """
    frame = state.frame
    if not force and np.max(np.abs(state.rho)) <= cfg.rebaseline_threshold * frame.a0:
        return state
    base = graph_to_curve(frame, state.rho, check=False)
    if detect_overlap(frame, base).any():
        return replace(state, extended=True)
    halves = None
    if frame.upper_half is not None and frame.lower_half is not None:
        halves = [frame.upper_half, frame.lower_half]
    a0 = tubular_radius(base, halves=halves)
    new = ReferenceFrame(base, a0, frame.upper, frame.lower, frame.upper_half, frame.lower_half)
    # only the sign conditions matter for the cut; a retreating bridge may
    # legitimately leave |b0| above the smallness threshold
    if new.check_windows(b_tol=np.inf):
        return replace(state, extended=True)
    rho = np.zeros(frame.n)
    return replace(state, frame=new, rho=rho, ev=evaluate(new, rho, cfg), rebaselines=state.rebaselines + 1)


@dataclass(frozen=True)
class Event:
    kind: str  # firstTouch, overlapOnset, overlapCap, horizon, failure
    t: float
    step: int
    detail: str = ""


@dataclass
class RunResult:
    frames: list[SimState] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    status: str = "running"
    final: SimState | None = None

    def event(self, kind: str) -> Event | None:
        return next((e for e in self.events if e.kind == kind), None)


def _crossing_time(t0: float, v0: float, t1: float, v1: float, level: float) -> float:
    """Time at which the linear interpolant of v reaches ``level`` (v0 on one side)."""
    if v1 == v0:
        return t1
    return t0 + (level - v0) * (t1 - t0) / (v1 - v0)


def run(initial: SimState, cfg: StepConfig, frame_every: int = 1, on_frame=None) -> RunResult:
    """Step until the horizon, the overlap cap (after onset) or a failure.

    Frames are kept every ``frame_every`` steps plus the first and last.
    """
    cfg.validate()
    if frame_every < 1:
        raise ValueError("frame_every must be positive")
    out = RunResult()

    def keep(s: SimState) -> None:
        out.frames.append(s)
        if on_frame is not None:
            on_frame(s)

    state = initial
    keep(state)
    touched = onset = False
    if state.ev.min_gap <= cfg.touch_tol:
        out.events.append(Event("firstTouch", state.t, state.step, "touching at start"))
        touched = True
    if state.ev.overlap_depth >= cfg.overlap_depth_tol:
        out.events.append(Event("overlapOnset", state.t, state.step, "overlapping at start"))
        onset = True
    n_steps = int(math.ceil(cfg.max_t / cfg.dt - 1e-9))
    while state.step < n_steps:
        prev = state
        try:
            state = step_imex(state, cfg)
        except (RebaselineRequired, RobinSolveError, EllipticityLost, GeometryError, np.linalg.LinAlgError) as exc:
            out.events.append(Event("failure", prev.t, prev.step, f"{type(exc).__name__}: {exc}"))
            out.status = "failure"
            out.final = prev
            if out.frames[-1] is not prev:
                keep(prev)
            return out
        ev = state.ev
        if not touched and ev.min_gap <= cfg.touch_tol:
            t = _crossing_time(prev.t, prev.ev.min_gap, state.t, ev.min_gap, cfg.touch_tol)
            out.events.append(Event("firstTouch", t, state.step, f"min gap {ev.min_gap:.3g}"))
            touched = True
        if not onset and ev.overlap_depth >= cfg.overlap_depth_tol:
            t = _crossing_time(prev.t, prev.ev.overlap_depth, state.t, ev.overlap_depth, cfg.overlap_depth_tol)
            out.events.append(Event("overlapOnset", t, state.step, f"overlap measure {ev.overlap_measure:.3g}"))
            onset = True
        if onset and ev.overlap_measure >= cfg.overlap_cap:
            out.events.append(Event("overlapCap", state.t, state.step, f"overlap measure {ev.overlap_measure:.3g}"))
            out.status = "cap"
            break
        if state.step % frame_every == 0:
            keep(state)
    else:
        out.events.append(Event("horizon", state.t, state.step))
        out.status = "horizon"
    if out.frames[-1] is not state:
        keep(state)
    out.final = state
    return out


def mirror_defect(rho: np.ndarray) -> float:
    """max |rho(s) - rho(mirror s)| for the node pairing i <-> N/2 - i."""
    n = rho.size
    return float(np.max(np.abs(rho - rho[(n // 2 - np.arange(n)) % n])))
