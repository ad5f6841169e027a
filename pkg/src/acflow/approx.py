"""The explicit approximate solution c_A and its norm estimates.

``c_A(x, t) = Phi(e(x, t))`` with the transported level set
``e = d0 o X_t^{-1}`` and the layered profile ``Phi`` of the initial value.
It is evaluated pointwise through the flow map, so it carries no
time-stepping error.  In the Lagrangian frame ``c_A(X_t(a), t) = c0(a)``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import as_distance, integrate_points
from .grid import Grid, ScalarField
from .profile import Cutoff
from .solver import RunParams, layered_profile, layered_profile_derivative


class ResolutionError(ValueError):
    pass


@dataclass
class ApproxSolution:
    """c_A for a run: params, signed-distance provider of the initial interface, velocity, profile."""

    params: RunParams
    distance: object
    velocity: object
    profile: object
    cutoff: Cutoff = None

    def __post_init__(self):
        self.distance = as_distance(self.distance)
        if self.cutoff is None:
            self.cutoff = Cutoff()

    def level_set(self, x, y, t):
        """e(x, t) = d0(X_t^{-1}(x))."""
        pts = np.stack([np.asarray(x, float), np.asarray(y, float)], axis=-1)
        if t != 0.0 and self.velocity.kind != "zero":
            pts = integrate_points(self.velocity, pts, t, 0.0, self.params.flow_step)
        return self.distance.value(pts[..., 0], pts[..., 1])

    def shape(self, e):
        """Layered profile applied to level-set values (boundary sign included)."""
        p = self.params
        return p.boundary_value * layered_profile(e, p.eps, p.delta, self.profile, self.cutoff)

    def gradient_at(self, a, K):
        """(c_A, grad c_A) at X_t(a) given start points ``a`` and K = D(X_t^{-1}).

        grad c_A = Phi'(d0(a)) K^T grad d0(a).
        """
        p = self.params
        d = self.distance.value(a[..., 0], a[..., 1])
        gx0, gy0 = self.distance.grad(a[..., 0], a[..., 1])
        dphi = p.boundary_value * layered_profile_derivative(d, p.eps, p.delta, self.profile, self.cutoff)
        gx = dphi * (K[..., 0, 0] * gx0 + K[..., 1, 0] * gy0)
        gy = dphi * (K[..., 0, 1] * gx0 + K[..., 1, 1] * gy0)
        return self.shape(d), gx, gy

    def sampler(self, t):
        """Object with ``sample(x, y)`` evaluating c_A(., t)."""
        return _ApproxSampler(self, t)

    def field(self, t, grid):
        X, Y = grid.mesh()
        return ScalarField(self.shape(self.level_set(X, Y, t)), grid, time=t)

    def level_set_field(self, t, grid):
        X, Y = grid.mesh()
        return ScalarField(self.level_set(X, Y, t), grid, time=t)


class _ApproxSampler:
    def __init__(self, a, t):
        self.a = a
        self.t = t

    def sample(self, x, y):
        return self.a.shape(self.a.level_set(x, y, self.t))


def approx_at(a, x, t):
    """c_A at the points ``x`` (array with a trailing axis of length 2)."""
    x = np.asarray(x, dtype=float)
    return a.shape(a.level_set(x[..., 0], x[..., 1], t))


class ApproxNorms(NamedTuple):
    grad_L2: float
    lap_L2: float
    f_L2: float
    indicator_L2: float


def norm_grid(eps, cells_per_eps=8):
    return Grid.for_eps(eps, cells_per_eps=cells_per_eps)


def approx_norms(a, t, grid=None, well=None):
    """L2 norms of grad c_A, Lap c_A, f(c_A) and c_A - (2 chi - 1) at time t.

    Derivatives are centred differences on ``grid`` (default ``h <= eps/8``);
    chi is the indicator of {e >= 0}.
    """
    eps = a.params.eps
    grid = grid or norm_grid(eps)
    if grid.h > eps / 8.0 * (1 + 1e-12):
        raise ResolutionError(f"h = {grid.h:.4g} exceeds eps/8 = {eps / 8:.4g}")
    if well is None:
        from .profile import quartic_well

        well = quartic_well()
    e = a.level_set_field(t, grid)
    c = ScalarField(a.shape(e.values), grid, time=t)
    w = grid.weights()
    gx, gy = c.gradient()
    lap = c.laplacian()
    sharp = a.params.boundary_value * np.where(e.values >= 0.0, 1.0, -1.0)

    def l2(v):
        return float(np.sqrt(np.sum(v * v * w)))

    return ApproxNorms(
        grad_L2=float(np.sqrt(np.sum((gx * gx + gy * gy) * w))),
        lap_L2=l2(lap),
        f_L2=l2(well.f(c.values)),
        indicator_L2=l2(c.values - sharp),
    )


# name used by the published interface
lemma5_norms = approx_norms


class DifferenceNorms(NamedTuple):
    """Norms of u = c - c_A over a trajectory.

    ``sup_L2``: max over snapshots of ||u(t)||; ``grad_L2_spacetime``:
    ||grad u||_{L2(Omega_T)}; ``eps_grad_sq``: eps * ||grad u||^2_{L2(Omega_T)};
    ``indicator_sq_spacetime``: ||c - (2 chi - 1)||^2_{L2(Omega_T)}.
    """

    sup_L2: float
    grad_L2_spacetime: float
    eps_grad_sq: float
    indicator_sq_spacetime: float
    per_snapshot_L2: np.ndarray


def _trapezoid_time(times, values):
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if len(times) == 1:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def difference_norms(traj, a, fine=None):
    """Norms of ``u = c - c_A`` along ``traj``.

    Eulerian trajectories: ``u`` is formed at the solver nodes and carried to
    the fine grid (``h <= eps/8``) by bicubic interpolation.  Lagrangian
    trajectories: ``u = w - c0`` at the moving nodes, which is exact because
    the node map preserves area; gradients use ``grad_x = K^T grad_a``.
    """
    if traj.params.eps != a.params.eps or traj.params.delta != a.params.delta:
        raise ValueError("trajectory and approximate solution use different parameters")
    if traj.frame == "lagrangian":
        return _difference_lagrangian(traj, a)
    return _difference_eulerian(traj, a, fine or norm_grid(a.params.eps))


def _difference_lagrangian(traj, a):
    grid = traj.grid
    w8 = grid.weights()
    X, Y = grid.mesh()
    d0 = a.distance.value(X, Y)
    c_ref = a.shape(d0)
    sharp = a.params.boundary_value * np.where(d0 >= 0.0, 1.0, -1.0)
    l2, g2, ind = [], [], []
    for s in traj.snapshots:
        u = ScalarField(s.values - c_ref, grid)
        ux, uy = u.gradient()
        K = s.inverse_jacobian
        gx = K[..., 0, 0] * ux + K[..., 1, 0] * uy
        gy = K[..., 0, 1] * ux + K[..., 1, 1] * uy
        l2.append(float(np.sqrt(np.sum(u.values**2 * w8))))
        g2.append(float(np.sum((gx * gx + gy * gy) * w8)))
        ind.append(float(np.sum((s.values - sharp) ** 2 * w8)))
    return _assemble(traj, l2, g2, ind)


def _difference_eulerian(traj, a, fine):
    if traj.grid.n > fine.n:
        fine = traj.grid
    wf = fine.weights()
    l2, g2, ind = [], [], []
    for k, s in enumerate(traj.snapshots):
        e_run = a.level_set_field(s.time, traj.grid)
        u_run = ScalarField(s.values - a.shape(e_run.values), traj.grid)
        if fine == traj.grid:
            u = u_run
            c = ScalarField(s.values, traj.grid)
            e = e_run
        else:
            X, Y = fine.mesh()
            u = ScalarField(u_run.sample(X, Y), fine)
            c = ScalarField(traj.field(k).sample(X, Y), fine)
            e = a.level_set_field(s.time, fine)
        ux, uy = u.gradient()
        sharp = a.params.boundary_value * np.where(e.values >= 0.0, 1.0, -1.0)
        l2.append(float(np.sqrt(np.sum(u.values**2 * wf))))
        g2.append(float(np.sum((ux * ux + uy * uy) * wf)))
        ind.append(float(np.sum((c.values - sharp) ** 2 * wf)))
    return _assemble(traj, l2, g2, ind)


def _assemble(traj, l2, g2, ind):
    t = traj.times
    grad_sq = _trapezoid_time(t, g2)
    return DifferenceNorms(
        sup_L2=float(max(l2)),
        grad_L2_spacetime=float(np.sqrt(grad_sq)),
        eps_grad_sq=float(traj.params.eps * grad_sq),
        indicator_sq_spacetime=_trapezoid_time(t, ind),
        per_snapshot_L2=np.array(l2),
    )
