"""Capillary functional ``<H, phi> = eps * int grad c (x) grad c : grad phi``,
its sharp-interface candidates, and the normal-profile fit."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import GeometryError


class FunctionalError(ValueError):
    pass


@dataclass
class FunctionalRecord:
    eps: float
    theta: float
    t: float
    h_eps: float
    h_eps_A: float
    limit_stretched: float
    limit_sharp: float
    time_integrated: bool = False

    def __post_init__(self):
        vals = (self.h_eps, self.h_eps_A, self.limit_stretched, self.limit_sharp)
        if not all(np.isfinite(vals)):
            raise FunctionalError("functional record has non-finite entries")

    @property
    def gap_stretched(self):
        return abs(self.h_eps - self.limit_stretched)

    @property
    def gap_sharp(self):
        return abs(self.h_eps - self.limit_sharp)


def _check_support(phi, h):
    x0, x1, y0, y1 = phi.support_box
    margin = 2.0 * h
    if min(x0, y0) < margin or max(x1, y1) > 1.0 - margin:
        raise FunctionalError("test field support must clear the boundary by two cells")


def _contract(gx, gy, D):
    """(g (x) g) : D with D[i, j] = d phi_i / d x_j."""
    return gx * gx * D[0, 0] + gx * gy * (D[0, 1] + D[1, 0]) + gy * gy * D[1, 1]


def discrete_heps(c, phi, eps):
    """eps * sum over nodes of (grad_h c (x) grad_h c) : grad phi(x) * h^2."""
    grid = c.grid
    _check_support(phi, grid.h)
    gx, gy = c.gradient()
    X, Y = grid.mesh()
    D = phi.grad(X, Y)
    return float(eps * np.sum(_contract(gx, gy, D)) * grid.h**2)


def quadrature_spacing(eps, cells_per_eps=8):
    return eps / cells_per_eps


def _window_nodes(phi, h):
    x0, x1, y0, y1 = phi.support_box
    nx = int(np.ceil((x1 - x0) / h - 1e-9))
    ny = int(np.ceil((y1 - y0) / h - 1e-9))
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    X, Y = np.meshgrid(x0 + hx * np.arange(nx + 1), y0 + hy * np.arange(ny + 1), indexing="ij")
    return X, Y, hx * hy


def moving_node_heps(traj, k, phi, approx=None, h=None):
    """Functional of a Lagrangian snapshot, and optionally of c_A at the same time.

    Quadrature nodes form a physical-space window over the support of phi
    (spacing ``h``, default eps/8); at each node the start point
    ``a = X_t^{-1}(x)`` and ``K = D(X_t^{-1})`` come from the backward
    variational equation and ``grad c = K^T grad w(a)`` uses the bicubic
    spline of w.  A node sum on the start-point grid would alias because the
    flow squeezes the support of phi into thin filaments there, and centred
    differences at fixed h/eps would leave an eps-independent error.
    Returns ``(h_eps, h_eps_A)`` (the second is None without ``approx``).
    """
    if traj.frame != "lagrangian":
        raise FunctionalError("moving_node_heps needs a Lagrangian trajectory")
    eps = traj.params.eps
    _check_support(phi, traj.grid.h)
    X, Y, area = _window_nodes(phi, h or quadrature_spacing(eps))
    sampler = traj.sampler(k)
    a, K = sampler.start_points(X, Y, jacobian=True)
    D = phi.grad(X, Y)
    _, gx, gy = sampler.gradient_at(a, K)
    value = float(eps * np.sum(_contract(gx, gy, D)) * area)
    value_A = None
    if approx is not None:
        _, ax, ay = approx.gradient_at(a, K)
        value_A = float(eps * np.sum(_contract(ax, ay, D)) * area)
    return value, value_A


def snapshot_heps(traj, k, phi, approx=None):
    """``(h_eps, h_eps_A)`` of snapshot ``k`` in either frame.

    Eulerian snapshots use :func:`discrete_heps` on the run grid, applied to
    c and to c_A sampled on the same grid (one code path for both).
    """
    if traj.frame == "lagrangian":
        return moving_node_heps(traj, k, phi, approx)
    eps = traj.params.eps
    value = discrete_heps(traj.field(k), phi, eps)
    value_A = None
    if approx is not None:
        value_A = discrete_heps(approx.field(traj.snapshots[k].time, traj.grid), phi, eps)
    return value, value_A


def _segments(iface):
    v = iface.vertices
    nxt = np.roll(v, -1, axis=0)
    mid = 0.5 * (v + nxt)
    tan = nxt - v
    length = np.linalg.norm(tan, axis=1)
    nrm = np.column_stack([tan[:, 1], -tan[:, 0]]) / length[:, None]
    return mid, nrm, length


def limit_functional(iface, phi, sigma, stretch=None):
    """2 sigma * sum over segments of s * (n (x) n : grad phi)(midpoint) * length.

    ``stretch`` holds per-vertex values (averaged to segment midpoints);
    without it the sharp functional (s = 1) is returned.
    """
    mid, nrm, length = _segments(iface)
    D = phi.grad(mid[:, 0], mid[:, 1])
    dens = _contract(nrm[:, 0], nrm[:, 1], D)
    if stretch is not None:
        s = np.asarray(stretch, float)
        dens = dens * 0.5 * (s + np.roll(s, -1))
    return float(2.0 * sigma * np.sum(dens * length))


def curvature_functional(iface, phi, sigma):
    """2 sigma * sum over vertices of kappa (n . phi) ds (vertex quadrature).

    With kappa = -div n this equals the sharp functional for divergence-free phi.
    """
    v = iface.vertices
    seg = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    ds = 0.5 * (seg + np.roll(seg, 1))
    px, py = phi.value(v[:, 0], v[:, 1])
    n = iface.normals
    return float(2.0 * sigma * np.sum(iface.curvatures * (n[:, 0] * px + n[:, 1] * py) * ds))


def time_integrated(times, values):
    """Trapezoid rule over snapshot times (at least three)."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if times.shape != values.shape or times.size < 3:
        raise FunctionalError("time integration needs at least three snapshots")
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


# ---------------------------------------------------------------------------
# normal profile fit
# ---------------------------------------------------------------------------


class ProfileFit(NamedTuple):
    stretch_fit: np.ndarray
    shift_fit: np.ndarray
    residual: np.ndarray

    @property
    def ok(self):
        return np.isfinite(self.stretch_fit)


def profile_fit(c, iface, profile, eps, n_samples=49, half_length=1.0, s_range=(0.3, 3.0), b_range=(-2.0, 2.0), orientation=1.0):
    """Fit ``theta0(s (r - eps b) / eps)`` to c along every vertex normal.

    ``c`` is anything with ``sample(x, y)`` (a ScalarField or a trajectory
    sampler).  Samples cover ``|r| <= half_length * eps``.  A coarse grid
    search over (s, b) picks the start of a damped Gauss-Newton refinement;
    vertices whose refinement leaves the admissible box or does not reduce
    the residual get NaN.
    """
    v = iface.vertices
    n = iface.normals
    r = np.linspace(-half_length * eps, half_length * eps, n_samples)
    pts = v[:, None, :] + r[None, :, None] * n[:, None, :]
    data = orientation * np.asarray(c.sample(pts[..., 0], pts[..., 1]), float)
    z = r / eps

    # grid search, vectorised over vertices
    s_grid = np.geomspace(s_range[0], s_range[1], 48)
    b_grid = np.linspace(b_range[0], b_range[1], 41)
    S, B = np.meshgrid(s_grid, b_grid, indexing="ij")
    model = profile(S.ravel()[:, None] * (z[None, :] - B.ravel()[:, None]))  # (M, ns)
    # ||data - model||^2 = |data|^2 - 2 data.model + |model|^2
    cost = -2.0 * data @ model.T + np.sum(model * model, axis=1)[None, :]
    best = np.argmin(cost, axis=1)
    s = S.ravel()[best].copy()
    b = B.ravel()[best].copy()

    def resid(s, b):
        val, der = profile.evaluate(s[:, None] * (z[None, :] - b[:, None]))
        return data - val, der

    res, der = resid(s, b)
    cost0 = np.sum(res * res, axis=1)
    for _ in range(30):
        arg = z[None, :] - b[:, None]
        js = der * arg
        jb = -der * s[:, None]
        a11 = np.sum(js * js, axis=1)
        a12 = np.sum(js * jb, axis=1)
        a22 = np.sum(jb * jb, axis=1)
        r1 = np.sum(js * res, axis=1)
        r2 = np.sum(jb * res, axis=1)
        lam = 1e-12 * (a11 + a22)
        det = (a11 + lam) * (a22 + lam) - a12 * a12
        with np.errstate(all="ignore"):
            ds = ((a22 + lam) * r1 - a12 * r2) / det
            db = ((a11 + lam) * r2 - a12 * r1) / det
        ds = np.where(np.isfinite(ds), ds, 0.0)
        db = np.where(np.isfinite(db), db, 0.0)
        s_new = s + ds
        b_new = b + db
        res_new, der_new = resid(s_new, b_new)
        cost_new = np.sum(res_new * res_new, axis=1)
        better = cost_new <= cost0
        s = np.where(better, s_new, s)
        b = np.where(better, b_new, b)
        res = np.where(better[:, None], res_new, res)
        der = np.where(better[:, None], der_new, der)
        cost0 = np.where(better, cost_new, cost0)
        if np.max(np.abs(ds)) < 1e-12 and np.max(np.abs(db)) < 1e-12:
            break
    rms = np.sqrt(cost0 / n_samples)
    bad = (s < s_range[0]) | (s > s_range[1]) | (b < b_range[0]) | (b > b_range[1]) | ~np.isfinite(rms)
    s = np.where(bad, np.nan, s)
    b = np.where(bad, np.nan, b)
    rms = np.where(bad, np.nan, rms)
    return ProfileFit(s, b, rms)


def fit_stretch_summary(fit, reference=None, tol=0.1):
    """Fractions used by the profile-shape checks.

    Returns (fraction with |s - 1| <= tol, fraction within ``tol`` relative
    of ``reference``, largest |s - 1|), computed over fitted vertices.
    """
    ok = fit.ok
    if not np.any(ok):
        raise GeometryError("profile fit failed at every vertex")
    s = fit.stretch_fit[ok]
    near_one = float(np.mean(np.abs(s - 1.0) <= tol))
    match = float("nan")
    if reference is not None:
        ref = np.asarray(reference, float)[ok]
        match = float(np.mean(np.abs(s - ref) <= tol * np.abs(ref)))
    return near_one, match, float(np.max(np.abs(s - 1.0)))
