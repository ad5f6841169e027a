"""Sharp-interface reference evolutions: pure transport, convective curve
shortening ``V = n . v + m0 kappa`` by front tracking, and the shrinking circle."""

import math

import numpy as np

from . import kernels
from .fields import velocity_at
from .geometry import (
    DEFAULT_FLOW_STEP,
    GeometryError,
    Interface,
    integrate_points,
    make_interface,
    resample_uniform,
    three_point_curvature,
    vertex_normals,
)


class OracleError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


def transport_oracle(iface0, v, t, spacing=None, step=DEFAULT_FLOW_STEP):
    """Vertices carried by the flow map, then resampled at uniform arclength.

    ``spacing`` defaults to the mean spacing of ``iface0``; pass ``0`` to
    skip resampling.
    """
    if t == 0.0 or v.kind == "zero":
        return Interface(iface0.vertices.copy())
    pts = integrate_points(v, iface0.vertices, 0.0, t, step)
    if spacing == 0:
        return Interface(pts)
    spacing = spacing or float(np.mean(iface0.spacing))
    return make_interface(pts, spacing=spacing)


def mcf_oracle(iface0, v, m0, t_end, dt=None, spacing=None, check_every=10, record=None, t0=0.0):
    """Forward-Euler front tracking of ``V = n . v + m0 kappa`` from ``t0`` to ``t0 + t_end``.

    Every step moves each vertex by ``(v . n + m0 kappa) n dt`` and resamples
    the polyline at uniform arclength (``spacing`` defaults to the initial
    mean spacing).  ``dt`` defaults to ``0.2 spacing^2 / m0``.  A
    self-intersection (checked every ``check_every`` steps and at the end)
    aborts with :class:`OracleError` carrying the time.  ``record(t, pts)``
    is called after every step if given.

    With ``m0 = 0`` the law is pure transport and the vertices are carried
    by the flow map (see :func:`transport_oracle`).
    """
    if len(iface0) < 64:
        raise GeometryError("curvature flow needs at least 64 vertices")
    if m0 == 0.0:
        if t0 != 0.0:
            pts = integrate_points(v, iface0.vertices, t0, t0 + t_end)
            return make_interface(pts, spacing=spacing or float(np.mean(iface0.spacing)))
        return transport_oracle(iface0, v, t_end, spacing=spacing)
    spacing = spacing or float(np.mean(iface0.spacing))
    limit = spacing**2 / (4.0 * m0) if m0 > 0 else math.inf
    if dt is None:
        dt = min(0.8 * limit, t_end) if m0 > 0 else DEFAULT_FLOW_STEP
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} exceeds spacing^2/(4 m0)={limit:.3e}")
    nsteps = max(1, int(math.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    dt = t_end / nsteps if nsteps else 0.0
    pts = iface0.vertices.copy()
    t = t0
    for k in range(1, nsteps + 1):
        nrm = vertex_normals(pts)
        speed = m0 * three_point_curvature(pts, nrm)
        if v.kind != "zero":
            vx, vy = velocity_at(v, pts[:, 0], pts[:, 1], t)
            speed = speed + vx * nrm[:, 0] + vy * nrm[:, 1]
        pts = pts + (speed * dt)[:, None] * nrm
        t = t0 + k * dt
        m = int(round(_length(pts) / spacing))
        if m < 16 or _area(pts) <= 0.0:
            raise OracleError(f"front collapsed at t={t:.6g}", time=t)
        pts = resample_uniform(pts, n=m, passes=1)
        if k % check_every == 0 or k == nsteps:
            if kernels.self_intersections(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])):
                raise OracleError(f"front self-intersected at t={t:.6g}", time=t)
        if record is not None:
            record(t, pts)
    return Interface(pts)


def _length(pts):
    return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def _area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def shrinking_circle_radius(R0, m0, t):
    """sqrt(R0^2 - 2 m0 t), the circle solution of V = m0 kappa."""
    rem = R0 * R0 - 2.0 * m0 * t
    if rem <= 0.0:
        raise ValueError(f"t={t:g} is at or past the extinction time {R0 * R0 / (2 * m0):g}")
    return math.sqrt(rem)


def fit_circle_radius(iface):
    """Radius of the least-squares (Kasa) circle through the vertices."""
    x, y = iface.vertices[:, 0], iface.vertices[:, 1]
    A = np.column_stack([x, y, np.ones_like(x)])
    rhs = x * x + y * y
    (a, b, c), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cx, cy = 0.5 * a, 0.5 * b
    return float(math.sqrt(c + cx * cx + cy * cy)), (float(cx), float(cy))
