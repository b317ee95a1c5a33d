import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stefanloss.geometry import (
    ClosedCurve,
    GeometryError,
    RebaselineRequired,
    arclength_map,
    brute_force_crossings,
    circle,
    curve_to_graph,
    ellipse,
    graph_to_curve,
    read_curve_csv,
    resample,
    resample_arclength,
    resample_parameters,
    self_intersections,
    spectral_derivative,
    tangent_normal_curvature,
    tubular_radius,
    write_curve_csv,
)
from stefanloss.shapegen import ShapeSpec, make_circle_frame, make_dumbbell


def lemniscate(n, shift=0.013):
    s = 2 * np.pi * np.arange(n) / n + shift
    return np.column_stack([np.cos(s), np.sin(2 * s) / 2])


def test_unit_circle_curvature():
    _, nrm, h = tangent_normal_curvature(circle(1.0, 256))
    assert np.max(np.abs(h - 1.0)) < 1e-10
    # inner normal points at the centre
    pts = circle(1.0, 256).points
    assert np.max(np.abs(nrm + pts)) < 1e-10


def test_radius_two_curvature():
    assert np.max(np.abs(circle(2.0, 256).curvature - 0.5)) < 1e-10


def test_ellipse_curvature_at_vertex():
    h = ellipse(2.0, 1.0, 256).curvature
    assert abs(h[0] - 2.0) < 1e-8
    s = ellipse(2.0, 1.0, 256).s
    exact = 2.0 / (4 * np.sin(s) ** 2 + np.cos(s) ** 2) ** 1.5
    assert np.max(np.abs(h - exact)) < 1e-8


def test_clockwise_and_degenerate_curves_rejected():
    pts = circle(1.0, 64).points[::-1]
    with pytest.raises(GeometryError):
        ClosedCurve(pts).validate()
    with pytest.raises(GeometryError):
        ClosedCurve(np.zeros((7, 2)))


def polar_curvature_error(n):
    s = 2 * np.pi * np.arange(n) / n
    r = np.exp(0.3 * np.cos(3 * s))
    rp = -0.9 * np.sin(3 * s) * r
    rpp = (-2.7 * np.cos(3 * s) + 0.81 * np.sin(3 * s) ** 2) * r
    c = ClosedCurve(np.column_stack([r * np.cos(s), r * np.sin(s)]))
    exact = (r * r + 2 * rp * rp - r * rpp) / (r * r + rp * rp) ** 1.5
    return np.max(np.abs(c.curvature - exact))


def test_curvature_spectral_accuracy():
    # faster than N^-4: each doubling gains much more than a factor 16
    e16, e32, e64 = (polar_curvature_error(n) for n in (16, 32, 64))
    assert e32 < e16 / 16
    assert e64 < max(e32 / 16, 1e-11)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.5, 3.0), b=st.floats(0.5, 3.0), c1=st.floats(-0.1, 0.1), c3=st.floats(-0.05, 0.05))
def test_total_turning_is_two_pi(a, b, c1, c3):
    s = 2 * np.pi * np.arange(256) / 256
    r = 1 + c1 * np.cos(2 * s) + c3 * np.sin(3 * s)
    c = ClosedCurve(np.column_stack([a * r * np.cos(s), b * r * np.sin(s)]))
    assert abs(np.sum(c.curvature * c.weights) - 2 * np.pi) < 1e-6


def test_graph_identity_and_offsets():
    frame = make_circle_frame(1.0, 128)
    zero = np.zeros(128)
    assert np.array_equal(graph_to_curve(frame, zero).points, frame.base.points)
    c = graph_to_curve(frame, np.full(128, 0.1))
    assert np.max(np.abs(np.hypot(c.x, c.y) - 1.1)) < 1e-12
    assert np.max(np.abs(curve_to_graph(frame, circle(0.9, 128)) + 0.1)) < 1e-12
    assert np.max(np.abs(curve_to_graph(frame, frame.base))) == 0.0


def test_tubular_bound_signals_rebaseline():
    frame = make_circle_frame(1.0, 64)
    with pytest.raises(RebaselineRequired):
        graph_to_curve(frame, np.full(64, frame.a0 / 4 * 1.01))


@settings(max_examples=40, deadline=None)
@given(coef=st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4))
def test_graph_roundtrip(coef):
    frame = make_circle_frame(1.0, 128)
    s = frame.base.s
    rho = sum(c * np.cos((k + 1) * s + k) for k, c in enumerate(coef))
    rho *= frame.a0 / 4 / max(1.0, np.max(np.abs(rho)) * 1.01)
    back = curve_to_graph(frame, graph_to_curve(frame, rho))
    assert np.max(np.abs(back - rho)) < 1e-10


def test_dumbbell_normal_perturbation():
    frame = make_dumbbell(ShapeSpec(gap=0.02, nodes=512)).frame
    pert = ClosedCurve(frame.base.points + 1e-3 * frame.base.normal)
    assert np.max(np.abs(curve_to_graph(frame, pert) + 1e-3)) < 1e-9


def test_resample_uniform_circle_is_unchanged():
    c = circle(1.0, 128)
    assert np.max(np.abs(resample_arclength(c, 128).points - c.points)) < 1e-10


def test_resample_clustered_circle():
    s = 2 * np.pi * np.arange(128) / 128
    t = s + 0.3 * np.sin(s)
    c = ClosedCurve(np.column_stack([np.cos(t), np.sin(t)]))
    r = resample_arclength(c, 128)
    seg = np.hypot(*np.diff(np.vstack([r.points, r.points[:1]]), axis=0).T)
    assert np.max(np.abs(seg / seg.mean() - 1)) < 1e-8
    assert abs(r.length - 2 * np.pi) < 1e-8


def test_resample_dumbbell_uniform():
    d = make_dumbbell(ShapeSpec(gap=0.02, nodes=1024))
    ell, _, total = arclength_map(d.curve)
    s_new = resample_parameters(d.curve, 2048)
    spacing = np.diff(np.append(ell(s_new), ell(s_new[:1]) + total))
    assert np.max(np.abs(spacing / spacing.mean() - 1)) < 1e-6
    assert abs(total - d.curve.length) / d.curve.length < 1e-8
    # re-interpolating the graded curve on uniform nodes costs a little more
    r = resample_arclength(d.curve, 2048)
    assert abs(r.length - d.curve.length) / d.curve.length < 5e-8


def test_resample_rejects_underresolved():
    with pytest.raises(GeometryError):
        resample(ellipse(5.0, 0.2, 256), 32)


def test_circle_has_no_crossings():
    c = circle(1.0, 256)
    inter = self_intersections(c)
    assert inter.embedded and inter.crossings == []
    assert abs(inter.min_gap - 2 * np.cos(np.pi / 256)) < 1e-3


def test_lemniscate_single_crossing():
    pts = lemniscate(256)
    inter = self_intersections(ClosedCurve(pts))
    assert len(inter.crossings) == 1
    assert np.hypot(*inter.crossings[0][2]) < 0.03
    assert not inter.embedded


def test_dumbbell_gap():
    d = make_dumbbell(ShapeSpec(gap=0.01, nodes=1024))
    inter = self_intersections(d.curve)
    assert inter.embedded
    assert abs(inter.min_gap - 0.02) < 1e-3


@settings(max_examples=60, deadline=None)
@given(data=st.data(), half=st.integers(4, 24))
def test_crossings_match_brute_force(data, half):
    n = 2 * half
    vals = data.draw(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2 * n, max_size=2 * n))
    pts = np.array(vals).reshape(n, 2)
    pts += 1e-3 * np.arange(2 * n).reshape(n, 2)  # avoid repeated nodes
    fast = {(i, j) for i, j, _ in self_intersections(ClosedCurve(pts)).crossings}
    slow = {(i, j) for i, j, _ in brute_force_crossings(pts)}
    assert fast == slow


def test_crossings_match_brute_force_on_test_curves():
    for pts in (lemniscate(128), circle(1.0, 128).points, make_dumbbell(ShapeSpec(gap=0.02, nodes=512)).curve.points):
        fast = {(i, j) for i, j, _ in self_intersections(ClosedCurve(pts)).crossings}
        assert fast == {(i, j) for i, j, _ in brute_force_crossings(pts)}


def test_tangency_is_not_a_crossing():
    # two lobes touching along a shared segment
    d = make_dumbbell(ShapeSpec(gap=0.0, nodes=512))
    inter = self_intersections(d.curve)
    assert inter.crossings == []
    assert inter.min_gap <= 1e-9


def test_tubular_radius_circle():
    assert abs(tubular_radius(circle(2.0, 128)) - 2.0) < 1e-9


def test_csv_roundtrip(tmp_path):
    c = ellipse(2.0, 1.0, 64)
    write_curve_csv(c, tmp_path / "c.csv")
    assert np.array_equal(read_curve_csv(tmp_path / "c.csv").points, c.points)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "s,x,y"


def test_spectral_derivative_of_trig_polynomial():
    s = 2 * np.pi * np.arange(64) / 64
    f = np.sin(3 * s) + np.cos(5 * s)
    assert np.max(np.abs(spectral_derivative(f) - (3 * np.cos(3 * s) - 5 * np.sin(5 * s)))) < 1e-11
