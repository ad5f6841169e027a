"""Double-well potential, optimal profile, surface tension and cutoff."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class DoubleWell:
    """Potential ``F`` with wells at -1 and +1, its derivative ``f`` and ``f'``.

    All three callables must accept numpy arrays.  The invariants (stable
    wells, positive barrier) are checked on construction.
    """

    F: Callable
    f: Callable
    f_prime: Callable
    wells: tuple = (-1.0, 1.0)
    name: str = "custom"

    def __post_init__(self):
        lo, hi = self.wells
        if (lo, hi) != (-1.0, 1.0):
            raise ProfileError("wells are fixed at -1 and +1")
        ends = np.array([lo, hi])
        if np.max(np.abs(self.f(ends))) > 1e-12:
            raise ProfileError("f(+-1) must vanish")
        if np.min(self.f_prime(ends)) <= 0.0:
            raise ProfileError("f'(+-1) must be positive")
        u = np.linspace(-1.0, 1.0, 2001)
        Fu = self.F(u)
        if np.min(Fu[1:-1]) <= 0.0 or abs(Fu[0]) > 1e-12 or abs(Fu[-1]) > 1e-12:
            raise ProfileError("F must vanish at the wells and be positive between them")

    def lipschitz(self, samples=4001):
        """max |f'| on [-1, 1] (sampled)."""
        u = np.linspace(-1.0, 1.0, samples)
        return float(np.max(np.abs(self.f_prime(u))))


def quartic_well():
    """F(c) = (1 - c^2)^2."""
    return DoubleWell(
        F=lambda c: (1.0 - c * c) ** 2,
        f=lambda c: 4.0 * c * (c * c - 1.0),
        f_prime=lambda c: 12.0 * c * c - 4.0,
        name="quartic",
    )


@dataclass(frozen=True)
class ProfileTable:
    """Optimal profile sampled on a uniform grid ``z_grid`` (symmetric about 0)."""

    z_grid: np.ndarray
    theta0: np.ndarray
    theta0_prime: np.ndarray
    sigma: float
    residual: float = float("nan")
    well: DoubleWell = field(default=None, repr=False, compare=False)

    @property
    def z_max(self):
        return float(self.z_grid[-1])

    @property
    def dz(self):
        return float(self.z_grid[1] - self.z_grid[0])

    def __call__(self, z):
        return self.evaluate(z)[0]

    def evaluate(self, z):
        """Cubic Hermite interpolation of (theta0, theta0') at ``z``.

        Outside the table the wells (+-1) and a zero derivative are returned.
        """
        z = np.asarray(z, dtype=float)
        z0 = self.z_grid[0]
        dz = self.dz
        n = self.z_grid.shape[0]
        s = (np.clip(z, z0, self.z_grid[-1]) - z0) / dz
        k = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
        t = s - k
        y0, y1 = self.theta0[k], self.theta0[k + 1]
        d0, d1 = self.theta0_prime[k] * dz, self.theta0_prime[k + 1] * dz
        t2 = t * t
        t3 = t2 * t
        val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1
        der = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * d0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * d1) / dz
        outside = np.abs(z) > self.z_grid[-1]
        val = np.where(outside, np.sign(z), val)
        der = np.where(outside, 0.0, der)
        return val, der

    def to_csv(self, path):
        data = np.column_stack([self.z_grid, self.theta0, self.theta0_prime])
        np.savetxt(path, data, delimiter=",", header="z,theta0,dtheta0", comments="", fmt="%.17g")


def _first_integral_branch(well, z_max, n_half, sign, substeps=4):
    """RK4 on theta' = sqrt(2 F(theta)) from theta(0) = 0 towards +-z_max."""
    h = z_max / (n_half - 1) / substeps

    def rhs(th):
        return np.sqrt(np.maximum(2.0 * well.F(th), 0.0))

    th = 0.0
    out = np.empty(n_half)
    out[0] = 0.0
    for k in range(1, n_half):
        for _ in range(substeps):
            k1 = rhs(th)
            k2 = rhs(th + 0.5 * sign * h * k1)
            k3 = rhs(th + 0.5 * sign * h * k2)
            k4 = rhs(th + sign * h * k3)
            th = th + sign * h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            th = min(max(th, -1.0), 1.0)
        out[k] = th
    return out


def profile_residual(z_grid, theta0, f):
    """max |-theta0'' + f(theta0)| on the table interior.

    theta0'' is taken from the five-point (fourth-order) centred difference;
    the plain three-point stencil cannot reach 1e-8 before round-off wins.
    """
    dz = z_grid[1] - z_grid[0]
    d2 = (
        -theta0[4:] + 16.0 * theta0[3:-1] - 30.0 * theta0[2:-2] + 16.0 * theta0[1:-3] - theta0[:-4]
    ) / (12.0 * dz * dz)
    res = np.abs(-d2 + f(theta0[2:-2]))
    return float(np.max(res))


def build_profile(well=None, z_max=12.0, n_samples=8193):
    """Tabulate the optimal profile theta0 of ``-theta0'' + f(theta0) = 0``.

    The profile is obtained from the first integral ``theta0' = sqrt(2 F)``
    integrated from ``theta0(0) = 0`` in both directions.

    Raises
    ------
    ProfileError
        if ``F`` is negative on (-1, 1) or the centred-difference residual of
        the table exceeds 1e-8.
    """
    if well is None:
        well = quartic_well()
    if z_max <= 0:
        raise ProfileError("z_max must be positive")
    if n_samples < 64:
        raise ProfileError("n_samples must be at least 64")
    u = np.linspace(-1.0, 1.0, 4001)[1:-1]
    if np.any(well.F(u) < 0.0):
        raise ProfileError("F < 0 on (-1, 1): no real first integral")
    n_half = n_samples // 2 + 1
    pos = _first_integral_branch(well, z_max, n_half, +1.0)
    neg = _first_integral_branch(well, z_max, n_half, -1.0)
    theta = np.concatenate([neg[:0:-1], pos])
    z = np.linspace(-z_max, z_max, theta.shape[0])
    dtheta = np.sqrt(np.maximum(2.0 * well.F(theta), 0.0))
    residual = profile_residual(z, theta, well.f)
    if residual > 1e-8:
        raise ProfileError(f"profile residual {residual:.3e} exceeds 1e-8; refine n_samples")
    table = ProfileTable(z, theta, dtheta, sigma=float("nan"), residual=residual, well=well)
    sigma = surface_tension(table)
    return ProfileTable(z, theta, dtheta, sigma=sigma, residual=residual, well=well)


def surface_tension(p):
    """sigma = 1/2 * int (theta0')^2 dz, composite trapezoid over the table."""
    sigma = 0.5 * trapezoid(p.theta0_prime**2, p.z_grid)
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise ProfileError("degenerate profile: theta0' vanishes identically")
    return float(sigma)


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cutoff:
    """Even C^2 cutoff: 1 on |z| < 1/2, 0 on |z| > 1, quintic smoothstep between."""

    inner: float = 0.5
    outer: float = 1.0

    def __call__(self, z):
        return cutoff_value(self, z)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        w = self.outer - self.inner
        s = np.clip((np.abs(z) - self.inner) / w, 0.0, 1.0)
        ds = 30.0 * s**2 * (s - 1.0) ** 2 / w
        return -np.sign(z) * ds


def cutoff_value(c, z):
    z = np.asarray(z, dtype=float)
    s = np.clip((np.abs(z) - c.inner) / (c.outer - c.inner), 0.0, 1.0)
    return 1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
