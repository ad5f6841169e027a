import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acflow.fields import StreamVelocity
from acflow.geometry import (
    CircleDistance,
    FlowError,
    FlowMap,
    GeometryError,
    Interface,
    PolylineDistance,
    circle_interface,
    ellipse_interface,
    extract_zero_contour,
    flow_backward,
    flow_forward,
    hausdorff_distance,
    integrate_points,
    interface_curvature,
    make_interface,
    signed_distance_circle,
    signed_distance_polyline,
    stretch_factor,
    three_point_curvature,
    transported_level_set,
)
from acflow.grid import Grid, ScalarField

VORTEX = StreamVelocity("single_vortex", 1.0)
ZERO = StreamVelocity("zero", 0.0)


def rounded_square(center=(0.5, 0.5), half=0.2, r=0.05, n=2000):
    """Counter-clockwise square of half side ``half`` with corner radius ``r``."""
    cx, cy = center
    a = half - r
    pieces = []
    corners = [(a, a, 0.0), (-a, a, 0.5 * math.pi), (-a, -a, math.pi), (a, -a, 1.5 * math.pi)]
    for k, (ox, oy, start) in enumerate(corners):
        ang = start + np.linspace(0.0, 0.5 * math.pi, 200, endpoint=False)
        pieces.append(np.column_stack([cx + ox + r * np.cos(ang), cy + oy + r * np.sin(ang)]))
        # straight side up to the next corner
        p0 = pieces[-1][-1] * 0 + [cx + ox + r * math.cos(start + 0.5 * math.pi), cy + oy + r * math.sin(start + 0.5 * math.pi)]
        nx, ny, _ = corners[(k + 1) % 4]
        nstart = corners[(k + 1) % 4][2]
        p1 = np.array([cx + nx + r * math.cos(nstart), cy + ny + r * math.sin(nstart)])
        s = np.linspace(0.0, 1.0, 400, endpoint=False)[:, None]
        pieces.append(p0 + s * (p1 - p0))
    return make_interface(np.vstack(pieces), n=n)


def _ds(v):
    seg = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


# ---------------------------------------------------------------------------
# interfaces
# ---------------------------------------------------------------------------


def test_interface_invariants():
    c = circle_interface((0.5, 0.5), 0.25, 256).check()
    assert np.max(np.abs(np.linalg.norm(c.normals, axis=1) - 1)) <= 1e-12
    # outward: normals point away from the centre
    assert np.all(np.sum((c.vertices - 0.5) * c.normals, axis=1) > 0)
    assert c.area() == pytest.approx(math.pi * 0.25**2, rel=1e-8)


def test_interface_rejects_clockwise_and_short():
    v = circle_interface((0.5, 0.5), 0.25, 64).vertices
    with pytest.raises(GeometryError):
        Interface(v[::-1])
    with pytest.raises(GeometryError):
        Interface(v[:3])
    assert make_interface(v[::-1]).area() > 0


def test_interface_detects_self_intersection():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    # a figure-eight traversed so the shoelace area stays positive
    v = np.column_stack([0.5 + 0.3 * np.sin(t), 0.5 + 0.2 * np.sin(2 * t) + 0.05 * np.cos(t)])
    with pytest.raises(GeometryError):
        make_interface(v).check()


def test_interface_spacing_band():
    v = circle_interface((0.5, 0.5), 0.25, 400).vertices
    v = np.vstack([v[:50:10], v[50:]])
    with pytest.raises(GeometryError):
        Interface(v).check()


def test_interface_csv_round_trip(tmp_path):
    c = ellipse_interface((0.5, 0.5), 0.3, 0.2, 128)
    c.to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().startswith("x,y\n")
    back = Interface.from_csv(tmp_path / "e.csv")
    assert np.array_equal(back.vertices, c.vertices)


# ---------------------------------------------------------------------------
# signed distance
# ---------------------------------------------------------------------------


def test_signed_distance_circle_examples():
    g = Grid(81)
    d = signed_distance_circle((0.5, 0.5), 0.25, g)
    i = lambda x: int(round(x / g.h))
    assert d.values[i(0.5), i(0.5)] == pytest.approx(-0.25)
    assert d.values[i(0.75), i(0.5)] == pytest.approx(0.0, abs=1e-15)
    assert d.values[i(0.9), i(0.5)] == pytest.approx(0.15)


def test_signed_distance_circle_clearance():
    with pytest.raises(GeometryError):
        signed_distance_circle((0.5, 0.5), 0.45, Grid(33), delta=0.1)


def test_polygon_distance_matches_circle():
    g = Grid(101)
    poly = circle_interface((0.5, 0.5), 0.25, 512)
    d_poly = signed_distance_polyline(poly, g)
    d_circ = signed_distance_circle((0.5, 0.5), 0.25, g)
    assert np.max(np.abs(d_poly.values - d_circ.values)) < 1e-4


def test_polyline_distance_on_vertex_and_square_centre():
    poly = circle_interface((0.5, 0.5), 0.25, 64)
    d = PolylineDistance(poly)
    assert d.value(poly.vertices[7, 0], poly.vertices[7, 1]) == 0.0
    sq = make_interface(np.array([[0.3, 0.3], [0.5, 0.3], [0.7, 0.3], [0.7, 0.5], [0.7, 0.7], [0.5, 0.7], [0.3, 0.7], [0.3, 0.5]]))
    assert PolylineDistance(sq).value(0.5, 0.5) == pytest.approx(-0.2)


def test_polyline_distance_gradient_is_unit(rng):
    d = PolylineDistance(ellipse_interface((0.5, 0.5), 0.3, 0.2, 512))
    x, y = rng.uniform(0.05, 0.95, (2, 200))
    gx, gy = d.grad(x, y)
    assert np.allclose(np.hypot(gx, gy), 1.0)


# ---------------------------------------------------------------------------
# flow map
# ---------------------------------------------------------------------------


def test_zero_velocity_is_identity(rng):
    x = rng.uniform(0, 1, (50, 2))
    assert np.array_equal(flow_forward(FlowMap(ZERO, 0.0, 1.0), x), x)


def test_vortex_stagnation_point():
    p = np.array([[0.5, 0.5]])
    out = flow_forward(FlowMap(VORTEX, 0.0, 0.5), p)
    assert np.max(np.abs(out - p)) < 1e-10


def test_flow_round_trip_and_step_independence(rng):
    x = rng.uniform(0.05, 0.95, (200, 2))
    fmap = FlowMap(VORTEX, 0.0, 0.5)
    fwd = flow_forward(fmap, x)
    assert np.max(np.abs(flow_backward(fmap, fwd) - x)) < 1e-8
    fine = flow_forward(FlowMap(VORTEX, 0.0, 0.5, step=fmap.step / 10), x)
    assert np.max(np.abs(fine - fwd)) < 1e-8
    assert np.array_equal(integrate_points(VORTEX, x, 0.3, 0.3), x)


def test_flow_reports_escape():
    fast = StreamVelocity("custom", derivs=lambda x, y, t: (0 * x, -np.ones_like(x), 0 * x, 0 * x, 0 * x))
    with pytest.raises(FlowError):
        integrate_points(fast, np.array([[0.9, 0.5]]), 0.0, 0.5)


def test_liouville(rng):
    x = rng.uniform(0.05, 0.95, (300, 2))
    for t in (0.1, 0.25, 0.5):
        _, J = integrate_points(VORTEX, x, 0.0, t, jacobian=True)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        assert np.max(np.abs(det - 1.0)) < 1e-8


# ---------------------------------------------------------------------------
# transported level set and stretch
# ---------------------------------------------------------------------------


def test_level_set_at_time_zero_is_distance():
    g = Grid(65)
    d0 = signed_distance_circle((0.5, 0.5), 0.25, g)
    ls = transported_level_set(d0, FlowMap(VORTEX), 0.0, g)
    assert np.array_equal(ls.e.values, d0.values)


def test_vortex_core_is_nearly_rigid():
    """Near the stagnation point the flow is a rotation, so |grad e| stays 1.

    Centred differences of a small circle's distance carry an O(h^2/R^2)
    error of their own; it is measured at t = 0 and allowed for.
    """
    g = Grid(401)
    d0 = CircleDistance((0.5, 0.5), 0.02)
    fmap = FlowMap(VORTEX)
    X, Y = g.mesh()
    ring = np.abs(np.hypot(X - 0.5, Y - 0.5) - 0.02) < 0.005
    s = stretch_factor(d0, fmap, np.stack([X[ring], Y[ring]], axis=-1), 0.1)
    assert np.max(np.abs(s - 1.0)) < 1e-3
    fd0 = transported_level_set(d0, fmap, 0.0, g).gradient_norm.values[ring]
    fd = transported_level_set(d0, fmap, 0.1, g).gradient_norm.values[ring]
    assert np.max(np.abs(fd - s)) < np.max(np.abs(fd0 - 1.0)) + 1e-3


def test_level_set_transport_residual():
    """(e(t + dt) - e(t - dt)) / (2 dt) + v . grad_h e is O(h^2 + dt^2)."""
    d0 = CircleDistance((0.5, 0.5), 0.25)
    fmap = FlowMap(VORTEX)
    res = []
    for n in (65, 129):
        g = Grid(n)
        dt = 2 * g.h
        e_m = transported_level_set(d0, fmap, 0.3 - dt, g).e.values
        e_p = transported_level_set(d0, fmap, 0.3 + dt, g).e.values
        e0 = transported_level_set(d0, fmap, 0.3, g).e
        gx, gy = e0.gradient()
        X, Y = g.mesh()
        from acflow.fields import velocity_at

        vx, vy = velocity_at(VORTEX, X, Y)
        r = (e_p - e_m) / (2 * dt) + vx * gx + vy * gy
        tube = np.abs(e0.values) < 0.1
        tube[0, :] = tube[-1, :] = tube[:, 0] = tube[:, -1] = False
        res.append(np.max(np.abs(r[tube])))
    assert res[1] < res[0] / 3.0


def test_stretch_identity_and_nonunity():
    d0 = CircleDistance((0.5, 0.5), 0.25)
    pts = np.array([[0.75, 0.5], [0.5, 0.25]])
    assert np.array_equal(stretch_factor(d0, FlowMap(ZERO), pts, 0.5), np.ones(2))
    moved = flow_forward(FlowMap(VORTEX, 0.0, 0.5), np.array([[0.5 + 0.25 * math.cos(1.0), 0.5 + 0.25 * math.sin(1.0)]]))
    assert abs(stretch_factor(d0, FlowMap(VORTEX), moved, 0.5)[0] - 1.0) > 0.05


def test_stretch_matches_level_set_gradient():
    """Centred differences of e converge to the variational stretch at second order.

    At t = 0.5 the vortex packs large third derivatives into e, so the
    difference at h = 1/400 is still ~1e-2; the order is what is checked.
    """
    d0 = CircleDistance((0.5, 0.5), 0.25)
    fmap = FlowMap(VORTEX)
    errs = []
    for n in (201, 401):
        g = Grid(n)
        ls = transported_level_set(d0, fmap, 0.5, g)
        X, Y = g.mesh()
        tube = np.abs(ls.e.values) < 0.05
        tube[:2, :] = tube[-2:, :] = tube[:, :2] = tube[:, -2:] = False
        s = stretch_factor(d0, fmap, np.stack([X[tube], Y[tube]], axis=-1), 0.5)
        errs.append(np.max(np.abs(s - ls.gradient_norm.values[tube])))
    assert np.log2(errs[0] / errs[1]) >= 1.8
    assert errs[1] < 1e-2


def test_level_set_contour_matches_transported_polyline():
    g = Grid(129)
    d0 = CircleDistance((0.5, 0.5), 0.25)
    ls = transported_level_set(d0, FlowMap(VORTEX), 0.5, g)
    contour = extract_zero_contour(ls.e)
    moved = flow_forward(FlowMap(VORTEX, 0.0, 0.5), circle_interface((0.5, 0.5), 0.25, 2048).vertices)
    assert hausdorff_distance(contour, moved) <= 2 * g.h


# ---------------------------------------------------------------------------
# contours, curvature, Hausdorff
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [65, 129])
def test_contour_radius_error(n):
    g = Grid(n)
    c = extract_zero_contour(signed_distance_circle((0.5, 0.5), 0.25, g))
    r = np.hypot(c.vertices[:, 0] - 0.5, c.vertices[:, 1] - 0.5)
    assert np.max(np.abs(r - 0.25)) / 0.25 <= g.h**2 / 0.25


def test_contour_needs_sign_change():
    with pytest.raises(GeometryError, match="no sign change"):
        extract_zero_contour(ScalarField(np.ones((33, 33)), Grid(33)))


@pytest.mark.parametrize("eps, n, tol", [(0.5, 101, 1e-6), (0.02, 401, 2e-6)])
def test_contour_of_tanh_field_matches_distance(eps, n, tol):
    """Same zero set; linear edge interpolation of tanh(d/eps) errs by O(h^3/eps^2)."""
    g = Grid(n)
    d = signed_distance_circle((0.5, 0.5), 0.25, g)
    a = extract_zero_contour(d, resample=False)
    b = extract_zero_contour(ScalarField(np.tanh(d.values / eps), g), resample=False)
    assert hausdorff_distance(a, b) < tol


def test_curvature_of_circle():
    c = circle_interface((0.5, 0.5), 0.25, 512)
    assert np.max(np.abs(c.curvatures + 4.0)) < 1e-3
    assert np.max(np.abs(three_point_curvature(c.vertices) + 4.0)) < 1e-3


def test_curvature_of_ellipse_tip():
    e = ellipse_interface((0.5, 0.5), 0.3, 0.2, 1024)
    assert e.curvatures[0] == pytest.approx(-7.5, rel=0.01)


def test_curvature_of_straight_side():
    sq = rounded_square()
    v = sq.vertices
    flat = (np.abs(v[:, 0] - 0.5) < 0.1) | (np.abs(v[:, 1] - 0.5) < 0.1)
    assert np.max(np.abs(sq.curvatures[flat])) < 1e-3


@pytest.mark.parametrize("iface", [
    circle_interface((0.5, 0.5), 0.25, 256),
    ellipse_interface((0.5, 0.5), 0.3, 0.2, 1024),
    rounded_square(),
])
def test_total_curvature(iface):
    total = np.sum(iface.curvatures * _ds(iface.vertices))
    assert total == pytest.approx(-2 * math.pi, rel=0.01)


def test_hausdorff_examples():
    a = circle_interface((0.5, 0.5), 0.25, 512)
    assert hausdorff_distance(a, a) == 0.0
    b = circle_interface((0.5, 0.5), 0.27, 512)
    assert hausdorff_distance(a, b) == pytest.approx(0.02, abs=1e-4)
    moved = Interface(flow_forward(FlowMap(VORTEX, 0.0, 0.0), a.vertices))
    assert hausdorff_distance(a, moved) == 0.0


@settings(max_examples=25)
@given(
    st.floats(0.1, 0.3), st.floats(0.1, 0.3), st.floats(0.35, 0.65), st.floats(0.35, 0.65),
)
def test_ellipse_total_curvature_property(a, b, cx, cy):
    e = ellipse_interface((cx, cy), a, b, 1024)
    assert np.sum(e.curvatures * _ds(e.vertices)) == pytest.approx(-2 * math.pi, rel=0.01)


@settings(max_examples=25)
@given(st.floats(0.05, 0.3), st.floats(0.0, 0.05))
def test_hausdorff_of_concentric_circles(r, dr):
    a = circle_interface((0.5, 0.5), r, 512)
    b = circle_interface((0.5, 0.5), r + dr, 512)
    assert hausdorff_distance(a, b) == pytest.approx(dr, abs=(r + dr) * (1 - math.cos(math.pi / 512)) + 1e-12)
    assert hausdorff_distance(a, b) == hausdorff_distance(b, a)
