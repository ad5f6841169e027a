"""Divergence-free velocities and test fields built from stream functions.

For a stream function ``psi`` the field is ``(-psi_y, psi_x)``; its Jacobian
``[[-psi_xy, -psi_yy], [psi_xx, psi_xy]]`` has zero trace exactly, also in
floating point.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels

VELOCITY_KINDS = {
    "zero": kernels.KIND_ZERO,
    "single_vortex": kernels.KIND_SINGLE_VORTEX,
    "double_vortex": kernels.KIND_DOUBLE_VORTEX,
}


@dataclass(frozen=True)
class StreamVelocity:
    """Velocity ``(-psi_y, psi_x)`` on the unit box.

    Built-in kinds (stream functions vanish with their gradient on the box
    boundary):

    * ``zero``
    * ``single_vortex``: ``A sin^2(pi x) sin^2(pi y)``
    * ``double_vortex``: ``A sin^2(2 pi x) sin^2(pi y)``

    ``custom`` fields supply ``derivs(x, y, t) -> (psi_x, psi_y, psi_xx,
    psi_xy, psi_yy)``; they always run on the numpy code path.
    """

    kind: str = "single_vortex"
    amplitude: float = 1.0
    derivs: Optional[Callable] = None

    def __post_init__(self):
        if self.kind == "custom":
            if self.derivs is None:
                raise ValueError("custom velocity needs a derivs callable")
        elif self.kind not in VELOCITY_KINDS:
            raise ValueError(f"unknown velocity kind {self.kind!r}")

    @property
    def code(self):
        """Kernel code of a built-in kind, ``None`` for custom fields."""
        return VELOCITY_KINDS.get(self.kind)

    def stream_derivs(self, x, y, t=0.0):
        if self.kind == "custom":
            return self.derivs(x, y, t)
        return kernels.stream_derivs(self.code, self.amplitude, np.asarray(x, float), np.asarray(y, float))

    def max_speed(self, samples=201):
        if self.kind == "zero":
            return 0.0
        s = np.linspace(0.0, 1.0, samples)
        X, Y = np.meshgrid(s, s, indexing="ij")
        vx, vy = velocity_at(self, X, Y)
        return float(np.max(np.hypot(vx, vy)))

    @classmethod
    def from_config(cls, cfg):
        cfg = cfg or {}
        return cls(kind=cfg.get("kind", "single_vortex"), amplitude=float(cfg.get("amplitude", 1.0)))


def velocity_at(v, x, y, t=0.0):
    px, py, _, _, _ = v.stream_derivs(x, y, t)
    return -py, px


def velocity_grad_at(v, x, y, t=0.0):
    """Jacobian ``dv_i/dx_j`` stacked as an array of shape ``(2, 2) + x.shape``."""
    _, _, pxx, pxy, pyy = v.stream_derivs(x, y, t)
    return np.array([[-pxy, -pyy], [pxx, pxy]])


# ---------------------------------------------------------------------------
# test fields
# ---------------------------------------------------------------------------


def _bump(s):
    """exp(1 - 1/(1 - s^2)) on |s| < 1 with first and second derivatives."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    g1 = -2.0 * s / q**2
    g2 = -2.0 / q**2 - 8.0 * s * s / q**3
    b1 = np.where(inside, g1 * b, 0.0)
    b2 = np.where(inside, (g2 + g1 * g1) * b, 0.0)
    return b, b1, b2


@dataclass(frozen=True)
class TestField:
    """Compactly supported divergence-free field ``(-psi_y, psi_x)``.

    ``psi = A * b((x - cx)/w) * b((y - cy)/w)`` with the smooth bump ``b``;
    the support is the square of half-width ``w`` around ``center``.
    """

    __test__ = False  # not a pytest class

    center: tuple = (0.5, 0.5)
    halfwidth: float = 0.15
    amplitude: float = 1.0

    @property
    def support_box(self):
        cx, cy = self.center
        w = self.halfwidth
        return (cx - w, cx + w, cy - w, cy + w)

    def stream_derivs(self, x, y):
        cx, cy = self.center
        w = self.halfwidth
        A = self.amplitude
        bx, bx1, bx2 = _bump((np.asarray(x, float) - cx) / w)
        by, by1, by2 = _bump((np.asarray(y, float) - cy) / w)
        return (
            A * bx1 * by / w,
            A * bx * by1 / w,
            A * bx2 * by / w**2,
            A * bx1 * by1 / w**2,
            A * bx * by2 / w**2,
        )

    def value(self, x, y):
        px, py, _, _, _ = self.stream_derivs(x, y)
        return -py, px

    def grad(self, x, y):
        _, _, pxx, pxy, pyy = self.stream_derivs(x, y)
        return np.array([[-pxy, -pyy], [pxx, pxy]])

    @classmethod
    def from_config(cls, cfg):
        cfg = cfg or {}
        return cls(
            center=tuple(float(c) for c in cfg.get("center", (0.5, 0.5))),
            halfwidth=float(cfg.get("halfwidth", 0.15)),
            amplitude=float(cfg.get("amplitude", 1.0)),
        )


def testfield_at(phi, x, y):
    return phi.value(x, y)


def testfield_grad_at(phi, x, y):
    return phi.grad(x, y)
