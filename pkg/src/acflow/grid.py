"""Uniform node grid on the unit box and grid-sampled scalar fields."""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.interpolate import RectBivariateSpline


@dataclass(frozen=True)
class Grid:
    """``n`` x ``n`` nodes on [0, 1]^2, spacing ``h = 1/(n-1)``."""

    n: int

    def __post_init__(self):
        if self.n < 33:
            raise ValueError(f"grid needs at least 33 nodes per side, got {self.n}")

    @property
    def h(self):
        return 1.0 / (self.n - 1)

    @property
    def coords(self):
        return np.linspace(0.0, 1.0, self.n)

    def mesh(self):
        s = self.coords
        return np.meshgrid(s, s, indexing="ij")

    def weights(self):
        """Composite-trapezoid quadrature weights (sum to 1)."""
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return np.outer(w, w)

    def refined(self):
        """Grid with ``2n - 1`` nodes (every old node kept)."""
        return Grid(2 * self.n - 1)

    @classmethod
    def for_eps(cls, eps, cells_per_eps=4, minimum=33):
        """Smallest grid with ``h <= eps / cells_per_eps``."""
        n = int(math.ceil(cells_per_eps / eps - 1e-9)) + 1
        return cls(max(n, minimum))

    def check_resolution(self, eps, cells_per_eps=4):
        if self.h > eps / cells_per_eps * (1 + 1e-12):
            raise ValueError(f"h = {self.h:.4g} exceeds eps/{cells_per_eps} = {eps / cells_per_eps:.4g}")


@dataclass
class ScalarField:
    """Node values ``values[i, j]`` at ``(i h, j h)``."""

    values: np.ndarray
    grid: Grid
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values shape {self.values.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("scalar field has non-finite entries")

    @cached_property
    def _spline(self):
        s = self.grid.coords
        return RectBivariateSpline(s, s, self.values, kx=3, ky=3, s=0)

    def sample(self, x, y, dx=0, dy=0):
        """Bicubic spline value (or derivative) at arbitrary points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = self._spline.ev(np.clip(x, 0.0, 1.0).ravel(), np.clip(y, 0.0, 1.0).ravel(), dx=dx, dy=dy)
        return out.reshape(x.shape)

    def integral(self):
        return float(np.sum(self.values * self.grid.weights()))

    def l2_norm(self):
        return math.sqrt(float(np.sum(self.values**2 * self.grid.weights())))

    def gradient(self):
        """Centred differences in the interior, zero on the boundary nodes."""
        h = self.grid.h
        gx = np.zeros_like(self.values)
        gy = np.zeros_like(self.values)
        gx[1:-1, 1:-1] = (self.values[2:, 1:-1] - self.values[:-2, 1:-1]) / (2 * h)
        gy[1:-1, 1:-1] = (self.values[1:-1, 2:] - self.values[1:-1, :-2]) / (2 * h)
        return gx, gy

    def laplacian(self):
        h = self.grid.h
        v = self.values
        lap = np.zeros_like(v)
        lap[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]) / h**2
        return lap
