"""Signed distances, characteristic flow maps, transported level sets, polylines.

Sign conventions: signed distances are negative inside the enclosed region,
interfaces are counter-clockwise with outward unit normals, and a circle of
radius R has curvature -1/R (so ``V = m0 * kappa`` shrinks it).
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.interpolate import CubicSpline
from skimage import measure

from . import kernels
from .fields import StreamVelocity
from .grid import Grid, ScalarField


class GeometryError(ValueError):
    pass


class FlowError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# interfaces
# ---------------------------------------------------------------------------


def _shoelace(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segment_lengths(v):
    return np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)


@dataclass
class Interface:
    """Closed counter-clockwise polyline with outward normals and curvatures."""

    vertices: np.ndarray
    normals: np.ndarray = field(default=None, repr=False)
    curvatures: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 5:
            raise GeometryError("interface needs an (N, 2) vertex array with N >= 5")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        self.vertices = v
        if _shoelace(v) <= 0.0:
            raise GeometryError("interface must be positively oriented")
        if self.normals is None:
            self.normals = vertex_normals(v)
        if self.curvatures is None:
            self.curvatures = interface_curvature(self)

    def __len__(self):
        return self.vertices.shape[0]

    @property
    def length(self):
        return float(np.sum(_segment_lengths(self.vertices)))

    @property
    def spacing(self):
        return _segment_lengths(self.vertices)

    def area(self, smooth=True):
        """Enclosed area; ``smooth`` integrates the periodic spline through the vertices."""
        if not smooth:
            return _shoelace(self.vertices)
        sp, total = _periodic_spline(self.vertices)
        # Gauss-Legendre on every knot interval; x y' is a polynomial there
        g, wg = np.polynomial.legendre.leggauss(6)
        knots = sp.x
        a, b = knots[:-1, None], knots[1:, None]
        s = 0.5 * (b - a) * g[None, :] + 0.5 * (a + b)
        pts = sp(s)
        der = sp(s, 1)
        integrand = 0.5 * (pts[..., 0] * der[..., 1] - pts[..., 1] * der[..., 0])
        return float(np.sum(0.5 * (b - a) * wg[None, :] * integrand))

    def isoperimetric_ratio(self):
        return self.length**2 / (4.0 * math.pi * self.area(smooth=False))

    def check(self, spacing_band=3.0):
        """Raise if the polyline is self-intersecting or badly spaced."""
        v = self.vertices
        n_cross = kernels.self_intersections(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]))
        if n_cross:
            raise GeometryError(f"polyline self-intersects ({n_cross} crossings)")
        ds = self.spacing
        mean = ds.mean()
        if ds.max() > spacing_band * mean or ds.min() < mean / spacing_band:
            raise GeometryError("vertex spacing outside the factor-3 band around the mean")
        if np.max(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0)) > 1e-12:
            raise GeometryError("normals are not unit length")
        return self

    def to_csv(self, path):
        np.savetxt(path, self.vertices, delimiter=",", header="x,y", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        v = np.loadtxt(path, delimiter=",", skiprows=1)
        return make_interface(v)


def make_interface(vertices, spacing=None, n=None):
    """Interface from arbitrary vertices: orientation fixed, optional resampling."""
    v = np.asarray(vertices, dtype=float)
    if np.allclose(v[0], v[-1]):
        v = v[:-1]
    keep = np.ones(len(v), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(v, axis=0), axis=1) > 1e-14
    v = v[keep]
    if _shoelace(v) < 0.0:
        v = v[::-1]
    if spacing is not None or n is not None:
        v = resample_uniform(v, spacing=spacing, n=n)
    return Interface(v)


def circle_interface(center, radius, n=512):
    a = 2.0 * np.pi * np.arange(n) / n
    v = np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)])
    return Interface(v)


def ellipse_interface(center, a, b, n=512):
    t = 2.0 * np.pi * np.arange(n) / n
    v = np.column_stack([center[0] + a * np.cos(t), center[1] + b * np.sin(t)])
    return Interface(v)


def _periodic_spline(v):
    closed = np.vstack([v, v[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return CubicSpline(s, closed, bc_type="periodic"), s[-1]


def resample_uniform(v, spacing=None, n=None, passes=2):
    """Resample a closed polyline at (nearly) uniform arclength.

    Points are taken on the periodic cubic spline through the vertices, so
    the curve itself is only perturbed at fourth order in the spacing.
    """
    v = np.asarray(v, dtype=float)
    for _ in range(passes):
        sp, total = _periodic_spline(v)
        if n is None:
            m = max(16, int(round(total / spacing)))
        else:
            m = int(n)
        # refine the arclength of the spline itself before placing points
        fine = np.linspace(0.0, total, 8 * m + 1)
        pts = sp(fine)
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        target = np.linspace(0.0, arc[-1], m, endpoint=False)
        v = sp(np.interp(target, arc, fine))
    return v


def vertex_normals(v):
    """Outward normals from centred chords (counter-clockwise orientation)."""
    t = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
    t /= np.linalg.norm(t, axis=1)[:, None]
    nrm = np.column_stack([t[:, 1], -t[:, 0]])
    return nrm / np.linalg.norm(nrm, axis=1)[:, None]


def interface_curvature(iface):
    """Signed curvature from a circle fitted to each vertex and its four nearest neighbours.

    The fit is algebraic (unit-norm coefficients of
    ``A (x^2 + y^2) + B x + C y + D = 0`` in coordinates centred on the vertex
    and scaled by the local spacing), so straight runs give zero rather than
    a singular system.  Negative on convex parts of a counter-clockwise
    curve (outward normals).
    """
    v = iface.vertices
    nrm = iface.normals if iface.normals is not None else vertex_normals(v)
    idx = (np.arange(len(v))[:, None] + np.arange(-2, 3)[None, :]) % len(v)
    local = v[idx] - v[:, None, :]
    scale = np.max(np.linalg.norm(local, axis=2), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    local = local / scale[:, None, None]
    x, y = local[..., 0], local[..., 1]
    Z = np.stack([x * x + y * y, x, y, np.ones_like(x)], axis=-1)
    coef = np.linalg.svd(Z)[2][:, -1, :]
    A, B, C, D = coef.T
    disc = np.sqrt(np.maximum(B * B + C * C - 4.0 * A * D, 1e-300))
    # (-B/2, -C/2) points from the vertex (the origin) to the centre, scaled by A
    side = np.sign(-0.5 * (B * nrm[:, 0] + C * nrm[:, 1]))
    return 2.0 * A * side / disc / scale


def three_point_curvature(v, nrm=None):
    """Signed curvature of the circle through each vertex and its two neighbours.

    Same sign convention as :func:`interface_curvature`.  This stencil damps
    every mode of the polyline, which keeps explicit front tracking stable;
    wider fitted stencils amplify the shortest modes.
    """
    v = np.asarray(v, dtype=float)
    nrm = vertex_normals(v) if nrm is None else nrm
    prev = np.roll(v, 1, axis=0)
    nxt = np.roll(v, -1, axis=0)
    a = v - prev
    b = nxt - v
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(nxt - prev, axis=1)
    kappa = 2.0 * cross / np.where(denom > 0, denom, np.inf)
    # outward normals of a ccw curve point right of the tangent
    t = nxt - prev
    side = np.sign(t[:, 1] * nrm[:, 0] - t[:, 0] * nrm[:, 1])
    return -kappa * np.where(side == 0, 1.0, side)


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance, vertices of one polyline to segments of the other."""
    va = a.vertices if isinstance(a, Interface) else np.asarray(a, float)
    vb = b.vertices if isinstance(b, Interface) else np.asarray(b, float)
    return max(_directed(va, vb), _directed(vb, va))


def _directed(p, v):
    _, cx, cy = kernels.polyline_distance(
        np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]),
        np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]),
    )
    return float(np.max(np.hypot(p[:, 0] - cx, p[:, 1] - cy)))


# ---------------------------------------------------------------------------
# signed distance providers
# ---------------------------------------------------------------------------


class CircleDistance:
    def __init__(self, center, radius):
        self.center = (float(center[0]), float(center[1]))
        self.radius = float(radius)

    def value(self, x, y):
        return np.hypot(x - self.center[0], y - self.center[1]) - self.radius

    def grad(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        r = np.hypot(dx, dy)
        r = np.where(r > 0, r, 1.0)
        return dx / r, dy / r

    def interface(self, n=512):
        return circle_interface(self.center, self.radius, n)


class PolylineDistance:
    def __init__(self, iface):
        self.iface = iface
        v = iface.vertices
        self._vx = np.ascontiguousarray(v[:, 0])
        self._vy = np.ascontiguousarray(v[:, 1])

    def _eval(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        d, cx, cy = kernels.polyline_distance(np.ascontiguousarray(x.ravel()), np.ascontiguousarray(y.ravel()), self._vx, self._vy)
        return d.reshape(x.shape), cx.reshape(x.shape), cy.reshape(x.shape)

    def value(self, x, y):
        return self._eval(x, y)[0]

    def grad(self, x, y):
        d, cx, cy = self._eval(x, y)
        gx, gy = np.asarray(x, float) - cx, np.asarray(y, float) - cy
        r = np.hypot(gx, gy)
        r = np.where(r > 0, r, 1.0)
        s = np.where(d < 0, -1.0, 1.0)
        return s * gx / r, s * gy / r

    def interface(self, n=None):
        return self.iface


class GridDistance:
    """Signed distance known only at grid nodes; evaluated by bicubic spline."""

    def __init__(self, field_):
        self.field = field_

    def value(self, x, y):
        return self.field.sample(x, y)

    def grad(self, x, y):
        return self.field.sample(x, y, dx=1), self.field.sample(x, y, dy=1)


def as_distance(d0):
    if isinstance(d0, ScalarField):
        return GridDistance(d0)
    return d0


def signed_distance_circle(center, radius, grid, delta=0.0):
    """Node values of ``|x - center| - radius``; the circle must clear the box by ``delta``."""
    cx, cy = center
    clearance = min(cx - radius, 1.0 - cx - radius, cy - radius, 1.0 - cy - radius)
    if clearance < delta or radius <= 0:
        raise GeometryError(f"circle clearance {clearance:.4g} below required {delta:.4g}")
    X, Y = grid.mesh()
    return ScalarField(CircleDistance(center, radius).value(X, Y), grid)


def signed_distance_polyline(iface, grid):
    v = iface.vertices
    if kernels.self_intersections(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1])):
        raise GeometryError("polyline self-intersects")
    X, Y = grid.mesh()
    return ScalarField(PolylineDistance(iface).value(X, Y), grid)


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------


DEFAULT_FLOW_STEP = 1.5e-3


@dataclass(frozen=True)
class FlowMap:
    """Characteristic map of ``velocity`` from ``t0`` to ``t1`` (classical RK4)."""

    velocity: StreamVelocity
    t0: float = 0.0
    t1: float = 0.0
    step: float = DEFAULT_FLOW_STEP


def integrate_points(velocity, pts, t_from, t_to, step=DEFAULT_FLOW_STEP, jacobian=False, use_numba=None):
    """Move points along characteristics from ``t_from`` to ``t_to``.

    Returns the end points (same shape as ``pts``) and, with ``jacobian``,
    the derivative of the map as an array of shape ``pts.shape[:-1] + (2, 2)``.
    """
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    x = np.ascontiguousarray(pts[..., 0].ravel()).copy()
    y = np.ascontiguousarray(pts[..., 1].ravel()).copy()
    jac = None
    if jacobian:
        jac = np.zeros((4, x.shape[0]))
        jac[0] = 1.0
        jac[3] = 1.0
    if velocity.kind != "zero":
        kernels.flow_points(velocity.code, velocity.amplitude, velocity.stream_derivs, x, y, t_from, t_to, step, jac, use_numba=use_numba)
    out = _clamp_domain(np.stack([x, y], axis=-1))
    out = out.reshape(shape + (2,))
    if jacobian:
        return out, jac.T.reshape(shape + (2, 2))
    return out


def _clamp_domain(p):
    excess = max(float(np.max(-p)), float(np.max(p - 1.0)), 0.0)
    if excess > 1e-8:
        raise FlowError(f"trajectory left the box by {excess:.3e}; reduce the integrator step")
    return np.clip(p, 0.0, 1.0)


def flow_forward(fmap, x):
    return integrate_points(fmap.velocity, x, fmap.t0, fmap.t1, fmap.step)


def flow_backward(fmap, x):
    return integrate_points(fmap.velocity, x, fmap.t1, fmap.t0, fmap.step)


@dataclass
class LevelSetField:
    e: ScalarField
    gradient_norm: ScalarField
    valid: np.ndarray = None


def transported_level_set(d0, fmap, t, grid):
    """``e(x, t) = d0(X_t^{-1}(x))`` on the grid, with ``|grad e|`` by centred differences.

    ``d0`` is a ScalarField (bicubic interpolation off-grid) or any signed
    distance provider with ``value``/``grad``.
    """
    dist = as_distance(d0)
    X, Y = grid.mesh()
    if t == 0.0:
        if isinstance(d0, ScalarField):
            e_vals = d0.values.copy()
        else:
            e_vals = dist.value(X, Y)
        valid = np.ones_like(e_vals, dtype=bool)
    else:
        start = integrate_points(fmap.velocity, np.stack([X, Y], axis=-1), t, fmap.t0, fmap.step)
        e_vals = dist.value(start[..., 0], start[..., 1])
        valid = np.all((start >= 0.0) & (start <= 1.0), axis=-1)
        if not np.all(valid):
            warnings.warn("backward characteristics left the level-set domain", RuntimeWarning)
    e = ScalarField(e_vals, grid, time=t)
    gx, gy = e.gradient()
    gn = np.hypot(gx, gy)
    gn[0, :] = gn[1, :]
    gn[-1, :] = gn[-2, :]
    gn[:, 0] = gn[:, 1]
    gn[:, -1] = gn[:, -2]
    return LevelSetField(e, ScalarField(gn, grid, time=t), valid)


def stretch_factor(d0, fmap, x, t):
    """``|DX_t^{-T} grad d0(X_t^{-1}(x))|`` via the backward variational equation."""
    dist = as_distance(d0)
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        gx, gy = dist.grad(x[..., 0], x[..., 1])
        return np.hypot(gx, gy)
    a, K = integrate_points(fmap.velocity, x, t, fmap.t0, fmap.step, jacobian=True)
    det = K[..., 0, 0] * K[..., 1, 1] - K[..., 0, 1] * K[..., 1, 0]
    if np.min(np.abs(det)) < 1e-12:
        raise FlowError("singular flow-map Jacobian")
    gx, gy = dist.grad(a[..., 0], a[..., 1])
    # K = D(X_t^{-1}) = (DX_t)^{-1}; grad e = K^T grad d0
    ex = K[..., 0, 0] * gx + K[..., 1, 0] * gy
    ey = K[..., 0, 1] * gx + K[..., 1, 1] * gy
    return np.hypot(ex, ey)


# ---------------------------------------------------------------------------
# contour extraction
# ---------------------------------------------------------------------------


def extract_zero_contour(field_, spacing=None, resample=True):
    """Zero level set of a grid field as a single closed Interface.

    Marching squares with linear interpolation on cell edges, then uniform
    arclength resampling (spacing defaults to the grid spacing).
    """
    vals = field_.values if isinstance(field_, ScalarField) else np.asarray(field_)
    grid = field_.grid if isinstance(field_, ScalarField) else Grid(vals.shape[0])
    if not (np.min(vals) < 0.0 < np.max(vals)):
        raise GeometryError("no sign change in field")
    contours = measure.find_contours(vals, 0.0)
    closed = [c for c in contours if len(c) > 4 and np.allclose(c[0], c[-1])]
    if len(contours) != len(closed):
        raise GeometryError("zero set reaches the boundary of the box")
    if len(closed) != 1:
        raise GeometryError(f"zero set has {len(closed)} closed components, expected 1")
    pts = closed[0] * grid.h
    margin = 2 * grid.h
    if pts.min() < margin - 1e-12 or pts.max() > 1.0 - margin + 1e-12:
        raise GeometryError("zero set is closer than two cells to the boundary")
    if not resample:
        return make_interface(pts)
    return make_interface(pts, spacing=spacing or grid.h)
