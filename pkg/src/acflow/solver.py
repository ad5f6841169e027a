"""Explicit finite-difference solver for the convective Allen-Cahn equation

    dc/dt + v . grad c = m (Lap c - f(c) / eps^2),    m = m0 * eps^theta,

on the unit box with a Dirichlet boundary value and the layered initial
value built from a signed distance.

Two frames are available:

``eulerian``
    c on the fixed grid; midpoint RK2, 5-point Laplacian, centred advection.
``lagrangian``
    w(a, t) = c(X_t(a), t) on the grid of start points ``a``.  The
    advection term disappears and the Laplacian becomes div(G grad w) with
    G = DX^{-1} DX^{-T} (the flow is measure preserving, det DX = 1).  The
    nodes are carried along characteristics together with DX.  Advection is
    then exact, which is what the small-mobility regimes need: there the
    dispersion error of a central advection stencil at fixed h/eps would
    swamp the quantities being measured.
"""

from dataclasses import dataclass, field
import math
from typing import List, Optional
import warnings

import numpy as np

from . import kernels
from ._accel import USE_NUMBA
from .fields import StreamVelocity, velocity_at
from .geometry import DEFAULT_FLOW_STEP, integrate_points
from .grid import Grid, ScalarField
from .profile import Cutoff, ProfileTable

FRAMES = ("eulerian", "lagrangian")
SAFETY = 0.4
# largest step of the Lagrangian frame: there is no CFL limit, only accuracy
LAGRANGIAN_MAX_DT = 5e-3
MAX_PRINCIPLE_TOL = 1e-6


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunParams:
    """Run parameters; ``mobility = m0 * eps**theta`` is fixed at construction.

    ``n_snapshots`` (if set) overrides ``snapshot_every`` and spaces the
    snapshots evenly in time; the step count is then rounded up to a
    multiple of it.
    """

    eps: float
    theta: float
    m0: float = 1.0
    delta: float = 0.2
    grid_n: Optional[int] = None
    dt: Optional[float] = None
    T: float = 0.5
    snapshot_every: int = 1
    n_snapshots: Optional[int] = None
    boundary_value: float = 1.0
    frame: str = "eulerian"
    flow_step: float = DEFAULT_FLOW_STEP
    mobility: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.theta < 0.0:
            raise ValueError("theta must be non-negative")
        if self.m0 <= 0.0:
            raise ValueError("m0 must be positive")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.T < 0.0:
            raise ValueError("T must be non-negative")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")
        if self.n_snapshots is not None and self.n_snapshots < 1:
            raise ValueError("n_snapshots must be at least 1")
        if self.boundary_value not in (1.0, -1.0):
            raise ValueError("boundary_value must be +1 or -1")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        object.__setattr__(self, "mobility", self.m0 * self.eps**self.theta)

    def grid(self):
        g = Grid(self.grid_n) if self.grid_n else Grid.for_eps(self.eps)
        g.check_resolution(self.eps)
        return g

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "mobility"}
        kw.update(changes)
        return RunParams(**kw)


# ---------------------------------------------------------------------------
# initial value
# ---------------------------------------------------------------------------


def layered_profile(d, eps, delta, profile, cutoff):
    """zeta(d/delta) theta0(d/eps) + (1 - zeta(d/delta)) (2 [d >= 0] - 1)."""
    d = np.asarray(d, dtype=float)
    z = cutoff(d / delta)
    sign = np.where(d >= 0.0, 1.0, -1.0)
    return z * profile(d / eps) + (1.0 - z) * sign


def layered_profile_derivative(d, eps, delta, profile, cutoff):
    """d/dd of :func:`layered_profile`."""
    d = np.asarray(d, dtype=float)
    z = cutoff(d / delta)
    dz = cutoff.derivative(d / delta) / delta
    sign = np.where(d >= 0.0, 1.0, -1.0)
    val, der = profile.evaluate(d / eps)
    return dz * (val - sign) + z * der / eps


def initial_condition(params, d0, profile, cutoff=None):
    """Layered initial value on the grid of ``d0`` (a signed-distance ScalarField)."""
    cutoff = cutoff or Cutoff()
    if params.eps > 0.5 * params.delta:
        warnings.warn(
            f"eps={params.eps:g} exceeds half the cutoff plateau (delta/2={0.5 * params.delta:g}); "
            "the layer is truncated by the cutoff",
            RuntimeWarning,
        )
    c = layered_profile(d0.values, params.eps, params.delta, profile, cutoff)
    c = params.boundary_value * c
    return ScalarField(np.clip(c, -1.0, 1.0), d0.grid, time=0.0)


# ---------------------------------------------------------------------------
# time step
# ---------------------------------------------------------------------------


def stability_dt(params, grid, vmax, lipschitz=8.0, metric_bound=1.0):
    """0.4 * min(h^2 / (4 m G), eps^2 / (m L_f), h / vmax); vmax = 0 drops the last term."""
    m = params.mobility
    h = grid.h
    bounds = [h * h / (4.0 * m * metric_bound), params.eps**2 / (m * lipschitz)]
    if vmax > 0.0:
        bounds.append(h / vmax)
    return SAFETY * min(bounds)


def _schedule(params, dt0):
    if params.T == 0.0:
        return 0, 0.0, 1
    nsteps = max(1, int(math.ceil(params.T / dt0 - 1e-9)))
    if params.n_snapshots:
        k = params.n_snapshots
        nsteps = int(math.ceil(nsteps / k)) * k
        every = nsteps // k
    else:
        every = params.snapshot_every
    return nsteps, params.T / nsteps, every


# ---------------------------------------------------------------------------
# Eulerian frame
# ---------------------------------------------------------------------------


class _EulerianStepper:
    def __init__(self, params, velocity, grid, well):
        self.params = params
        self.velocity = velocity
        self.grid = grid
        self.well = well
        self.X, self.Y = grid.mesh()
        self.inv_eps2 = 1.0 / params.eps**2
        self.k = np.empty((grid.n, grid.n))
        self.tmp = np.empty((grid.n, grid.n))
        self.steady = velocity.kind != "custom"
        self._v = None
        self.rhs = kernels.ac_rhs if USE_NUMBA else kernels.ac_rhs_numpy

    def velocity_arrays(self, t):
        if self.steady and self._v is not None:
            return self._v
        vx, vy = velocity_at(self.velocity, self.X, self.Y, t)
        v = (np.ascontiguousarray(vx, dtype=float), np.ascontiguousarray(vy, dtype=float))
        if self.steady:
            self._v = v
        return v

    def __call__(self, c, t, dt):
        p = self.params
        h = self.grid.h
        vx, vy = self.velocity_arrays(t)
        self.rhs(c, self.well.f(c), vx, vy, p.mobility, self.inv_eps2, h, self.k)
        np.multiply(self.k, 0.5 * dt, out=self.tmp)
        self.tmp += c
        _impose_boundary(self.tmp, p.boundary_value)
        vx, vy = self.velocity_arrays(t + 0.5 * dt)
        self.rhs(self.tmp, self.well.f(self.tmp), vx, vy, p.mobility, self.inv_eps2, h, self.k)
        out = c + dt * self.k
        _impose_boundary(out, p.boundary_value)
        return out


def _impose_boundary(c, value):
    c[0, :] = value
    c[-1, :] = value
    c[:, 0] = value
    c[:, -1] = value


def _check_state(c, t):
    if not np.all(np.isfinite(c)):
        raise SolverError(f"non-finite values at t={t:.6g}; time step too large?")
    slack = float(np.max(np.abs(c))) - 1.0
    if slack > MAX_PRINCIPLE_TOL:
        raise SolverError(f"maximum principle violated by {slack:.3e} at t={t:.6g}")
    return max(slack, 0.0)


def step(c, params, v, t, dt=None, well=None):
    """One midpoint RK2 step in the Eulerian frame; returns a new ScalarField."""
    well = well or _default_well()
    grid = c.grid
    limit = stability_dt(params, grid, v.max_speed(), lipschitz=well.lipschitz())
    dt = params.dt if dt is None and params.dt is not None else dt
    dt = limit if dt is None else dt
    if dt > limit / SAFETY:
        raise SolverError(f"dt={dt:.3e} exceeds the stability bound {limit / SAFETY:.3e}")
    stepper = _EulerianStepper(params, v, grid, well)
    out = stepper(np.ascontiguousarray(c.values), t, dt)
    _check_state(out, t + dt)
    return ScalarField(out, grid, time=t + dt)


def _default_well():
    from .profile import quartic_well

    return quartic_well()


# ---------------------------------------------------------------------------
# Lagrangian frame
# ---------------------------------------------------------------------------


class _LagrangianState:
    """Node positions X_t(a) and Jacobians DX_t(a) for every grid node a."""

    def __init__(self, velocity, grid, step):
        X, Y = grid.mesh()
        self.velocity = velocity
        self.step = step
        self.x = np.ascontiguousarray(X.ravel()).copy()
        self.y = np.ascontiguousarray(Y.ravel()).copy()
        self.jac = np.zeros((4, self.x.shape[0]))
        self.jac[0] = 1.0
        self.jac[3] = 1.0
        self.shape = X.shape
        self.moving = velocity.kind != "zero"

    def copy(self):
        other = object.__new__(_LagrangianState)
        other.__dict__.update(self.__dict__)
        other.x = self.x.copy()
        other.y = self.y.copy()
        other.jac = self.jac.copy()
        return other

    def advance(self, t0, t1):
        if self.moving:
            v = self.velocity
            kernels.flow_points(v.code, v.amplitude, v.stream_derivs, self.x, self.y, t0, t1, self.step, self.jac)

    def inverse_jacobian(self):
        """K = (DX)^{-1} per node, shape (n, n, 2, 2)."""
        a11, a12, a21, a22 = self.jac
        det = a11 * a22 - a12 * a21
        if np.min(np.abs(det)) < 1e-12:
            raise SolverError("singular flow-map Jacobian")
        K = np.empty(self.shape + (2, 2))
        K[..., 0, 0] = (a22 / det).reshape(self.shape)
        K[..., 0, 1] = (-a12 / det).reshape(self.shape)
        K[..., 1, 0] = (-a21 / det).reshape(self.shape)
        K[..., 1, 1] = (a11 / det).reshape(self.shape)
        return K

    def metric(self):
        K = self.inverse_jacobian()
        g11 = K[..., 0, 0] ** 2 + K[..., 0, 1] ** 2
        g12 = K[..., 0, 0] * K[..., 1, 0] + K[..., 0, 1] * K[..., 1, 1]
        g22 = K[..., 1, 0] ** 2 + K[..., 1, 1] ** 2
        return np.ascontiguousarray(g11), np.ascontiguousarray(g12), np.ascontiguousarray(g22)

    def positions(self):
        return np.stack([self.x.reshape(self.shape), self.y.reshape(self.shape)], axis=-1)


def metric_bound(velocity, grid, T, step=DEFAULT_FLOW_STEP, stride=2, samples=40):
    """Largest trace of G = DX^{-1} DX^{-T} over [0, T] on every ``stride``-th node.

    The trace bounds the largest eigenvalue, so ``h^2 / (4 m bound)`` is a
    valid explicit diffusion limit for the whole run.
    """
    if velocity.kind == "zero" or T == 0.0:
        return 1.0
    sub = Grid(grid.n)
    state = _LagrangianState(velocity, sub, step)
    keep = np.zeros(state.shape, dtype=bool)
    keep[::stride, ::stride] = True
    keep = keep.ravel()
    state.x, state.y, state.jac = state.x[keep].copy(), state.y[keep].copy(), state.jac[:, keep].copy()
    state.shape = (int(keep.sum()),)
    best = 1.0
    times = np.linspace(0.0, T, samples + 1)
    for t0, t1 in zip(times[:-1], times[1:]):
        state.advance(t0, t1)
        G = state.metric()
        best = max(best, float(np.max(G[0] + G[2])))
    # the bound is sampled in time; allow for growth between samples
    return best * 1.1


class _LagrangianStepper:
    """SSP-RK2 (Heun) with flux-limited Euler stages; each stage keeps w in [-|b|, |b|]."""

    def __init__(self, params, velocity, grid, well):
        self.params = params
        self.grid = grid
        self.well = well
        self.state = _LagrangianState(velocity, grid, params.flow_step)
        self.inv_eps2 = 1.0 / params.eps**2
        self.bound = abs(params.boundary_value)
        self.lf = well.lipschitz()
        self.stage = kernels.metric_step if USE_NUMBA else kernels.metric_step_numpy
        self.metric_now = self.state.metric()

    def _check_dt(self, G, dt):
        # the low-order stage is monotone while dt * (sum of neighbour weights + Lf / eps^2) <= 1
        p = self.params
        gmax = float(np.max(G[0] + G[2]))
        rate = p.mobility * (3.0 * gmax / self.grid.h**2 + self.lf * self.inv_eps2)
        if dt * rate > 1.0:
            raise SolverError(f"dt={dt:.3e} exceeds the monotonicity bound {1.0 / rate:.3e} of the stretched metric")

    def _euler(self, w, G, dt):
        p = self.params
        out = np.empty_like(w)
        self.stage(w, self.well.f(w), G[0], G[1], G[2], p.mobility, self.inv_eps2, self.grid.h, dt, -self.bound, self.bound, out)
        _impose_boundary(out, p.boundary_value)
        return out

    def __call__(self, w, t, dt):
        G0 = self.metric_now
        self._check_dt(G0, dt)
        w1 = self._euler(w, G0, dt)
        self.state.advance(t, t + dt)
        self.metric_now = G1 = self.state.metric()
        self._check_dt(G1, dt)
        out = 0.5 * (w + self._euler(w1, G1, dt))
        _impose_boundary(out, self.params.boundary_value)
        return out


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Snapshot:
    """Solver state at one time.

    ``values`` holds c on the grid (Eulerian frame) or w = c(X_t(a)) on the
    grid of start points (Lagrangian frame, which also stores the node
    positions ``X_t(a)`` and ``K = DX_t(a)^{-1}``).
    """

    index: int
    step: int
    time: float
    values: np.ndarray
    mass: float
    slack: float
    energy: float
    positions: Optional[np.ndarray] = None
    inverse_jacobian: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    params: RunParams
    grid: Grid
    velocity: StreamVelocity
    snapshots: List[Snapshot]
    dt: float
    nsteps: int

    @property
    def frame(self):
        return self.params.frame

    @property
    def times(self):
        return np.array([s.time for s in self.snapshots])

    @property
    def max_slack(self):
        return max(s.slack for s in self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def field(self, k):
        """Raw solver array of snapshot ``k`` as a ScalarField."""
        s = self.snapshots[k]
        return ScalarField(s.values, self.grid, time=s.time)

    def sampler(self, k):
        """Object with ``sample(x, y)`` evaluating c(x, t_k) at arbitrary points."""
        if self.frame == "eulerian":
            return self.field(k)
        return _LagrangianSampler(self, k)

    def eulerian(self, k, grid=None):
        """c(., t_k) on ``grid`` (default: the run grid)."""
        grid = grid or self.grid
        if self.frame == "eulerian" and grid == self.grid:
            return self.field(k)
        X, Y = grid.mesh()
        vals = self.sampler(k).sample(X, Y)
        if self.frame == "lagrangian":
            _impose_boundary(vals, self.params.boundary_value)
        return ScalarField(vals, grid, time=self.snapshots[k].time)

    def write(self, outdir, prefix="c"):
        """Write every snapshot (as Eulerian c) in the text snapshot format."""
        import os

        os.makedirs(outdir, exist_ok=True)
        paths = []
        for k, s in enumerate(self.snapshots):
            path = os.path.join(outdir, snapshot_name(self.params.eps, self.params.theta, k, prefix))
            write_snapshot(path, self.eulerian(k))
            paths.append(path)
        return paths


class _LagrangianSampler:
    def __init__(self, traj, k):
        self.traj = traj
        self.snap = traj.snapshots[k]
        self.ref = ScalarField(self.snap.values, traj.grid, time=self.snap.time)

    def start_points(self, x, y, jacobian=False):
        """X_t^{-1} at the points (and its derivative K with ``jacobian``)."""
        pts = np.stack([np.asarray(x, float), np.asarray(y, float)], axis=-1)
        t = self.snap.time
        if t == 0.0 or self.traj.velocity.kind == "zero":
            if jacobian:
                return pts, np.broadcast_to(np.eye(2), pts.shape[:-1] + (2, 2)).copy()
            return pts
        return integrate_points(self.traj.velocity, pts, t, 0.0, self.traj.params.flow_step, jacobian=jacobian)

    def gradient_at(self, a, K):
        """(c, grad c) at the images of start points ``a``: grad_x c = K^T grad_a w."""
        w = self.ref.sample(a[..., 0], a[..., 1])
        wx = self.ref.sample(a[..., 0], a[..., 1], dx=1)
        wy = self.ref.sample(a[..., 0], a[..., 1], dy=1)
        gx = K[..., 0, 0] * wx + K[..., 1, 0] * wy
        gy = K[..., 0, 1] * wx + K[..., 1, 1] * wy
        return w, gx, gy

    def sample(self, x, y, dx=0, dy=0):
        if dx or dy:
            raise NotImplementedError("use start_points and gradient_at for derivatives")
        pts = np.stack([np.asarray(x, float), np.asarray(y, float)], axis=-1)
        t = self.snap.time
        if t != 0.0 and self.traj.velocity.kind != "zero":
            pts = integrate_points(self.traj.velocity, pts, t, 0.0, self.traj.params.flow_step)
        return self.ref.sample(pts[..., 0], pts[..., 1])


def _energy_eulerian(c, eps, h, well):
    grad = 0.5 * eps * (np.sum(np.diff(c, axis=0) ** 2) + np.sum(np.diff(c, axis=1) ** 2))
    return float(grad + h * h / eps * np.sum(well.F(c)))


def _energy_lagrangian(w, G, eps, grid, well):
    f = ScalarField(w, grid)
    gx, gy = f.gradient()
    dens = 0.5 * eps * (G[0] * gx * gx + 2.0 * G[1] * gx * gy + G[2] * gy * gy) + well.F(w) / eps
    return float(np.sum(dens * grid.weights()))


def simulate(params, v, c0, well=None, progress=None):
    """Advance ``c0`` to ``params.T``; snapshots include t = 0 and t = T.

    Each snapshot records the mass (integral of c), the running
    maximum-principle slack ``max(0, max|c| - 1)`` and the discrete energy.
    """
    well = well or _default_well()
    grid = c0.grid
    grid.check_resolution(params.eps)
    eulerian = params.frame == "eulerian"
    if eulerian:
        dt_max = stability_dt(params, grid, v.max_speed(), lipschitz=well.lipschitz())
        stepper = _EulerianStepper(params, v, grid, well)
    else:
        gmax = metric_bound(v, grid, params.T, params.flow_step)
        dt_max = min(stability_dt(params, grid, 0.0, lipschitz=well.lipschitz(), metric_bound=gmax), LAGRANGIAN_MAX_DT)
        stepper = _LagrangianStepper(params, v, grid, well)
    if params.dt is not None:
        if params.dt > dt_max / SAFETY:
            raise SolverError(f"dt={params.dt:.3e} exceeds the stability bound {dt_max / SAFETY:.3e}")
        dt_max = params.dt
    nsteps, dt, every = _schedule(params, dt_max)

    c = np.ascontiguousarray(c0.values, dtype=float).copy()
    _impose_boundary(c, params.boundary_value)
    weights = grid.weights()
    running = _check_state(c, 0.0)
    snaps = []

    def record(n, t):
        if eulerian:
            energy = _energy_eulerian(c, params.eps, grid.h, well)
            extra = {}
        else:
            energy = _energy_lagrangian(c, stepper.metric_now, params.eps, grid, well)
            extra = {
                "positions": stepper.state.positions(),
                "inverse_jacobian": stepper.state.inverse_jacobian(),
            }
        snaps.append(
            Snapshot(
                index=len(snaps),
                step=n,
                time=t,
                values=c.copy(),
                mass=float(np.sum(c * weights)),
                slack=running,
                energy=energy,
                **extra,
            )
        )

    record(0, 0.0)
    t = 0.0
    for n in range(1, nsteps + 1):
        c = stepper(c, t, dt)
        t = n * dt
        running = max(running, _check_state(c, t))
        if n % every == 0 or n == nsteps:
            record(n, t)
            if progress is not None:
                progress(n, nsteps, t)
    return Trajectory(params=params, grid=grid, velocity=v, snapshots=snaps, dt=dt, nsteps=nsteps)


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


def snapshot_name(eps, theta, index, prefix="c"):
    return f"{prefix}_eps{eps:g}_theta{theta:g}_t{index:04d}.dat"


def write_snapshot(path, f):
    """Header ``n h time`` then n rows of n values (row index i along x)."""
    with open(path, "w") as fh:
        fh.write(f"{f.grid.n} {f.grid.h!r} {float(f.time)!r}\n")
        np.savetxt(fh, f.values, fmt="%.17g")


def read_snapshot(path):
    with open(path) as fh:
        head = fh.readline().split()
        vals = np.loadtxt(fh, ndmin=2)
    n, h, t = int(head[0]), float(head[1]), float(head[2])
    grid = Grid(n)
    if abs(grid.h - h) > 1e-12 or vals.shape != (n, n):
        raise ValueError(f"{path}: inconsistent snapshot header")
    return ScalarField(vals, grid, time=t)
