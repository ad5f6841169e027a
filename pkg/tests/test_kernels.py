"""The compiled and the array versions of every kernel compute the same thing."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acflow import kernels
from acflow.fields import StreamVelocity


def _grid_case(rng, n=41):
    h = 1.0 / (n - 1)
    c = np.clip(rng.normal(0.0, 0.6, (n, n)), -1.0, 1.0)
    fc = 4.0 * c * (c * c - 1.0)
    return h, c, fc


def test_ac_rhs_backends_agree(rng):
    h, c, fc = _grid_case(rng)
    vx, vy = rng.normal(size=(2,) + c.shape)
    a, b = np.zeros_like(c), np.zeros_like(c)
    kernels.ac_rhs_numba(c, fc, vx, vy, 1e-3, 400.0, h, a)
    kernels.ac_rhs_numpy(c, fc, vx, vy, 1e-3, 400.0, h, b)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def _metric(rng, shape):
    A = rng.normal(0.0, 1.0, shape + (2, 2))
    G = np.einsum("...ij,...kj->...ik", A, A) + 0.1 * np.eye(2)
    return [np.ascontiguousarray(G[..., i, j]) for i, j in ((0, 0), (0, 1), (1, 1))]


def test_metric_step_backends_agree(rng):
    h, c, fc = _grid_case(rng)
    g11, g12, g22 = _metric(rng, c.shape)
    mob = 1e-3
    dt = 0.1 * h * h / (mob * float(np.max(g11 + g22)))
    a, b = np.zeros_like(c), np.zeros_like(c)
    kernels.metric_step_numba(c, fc, g11, g12, g22, mob, 400.0, h, dt, -1.0, 1.0, a)
    kernels.metric_step_numpy(c, fc, g11, g12, g22, mob, 400.0, h, dt, -1.0, 1.0, b)
    assert np.max(np.abs(a - b)) <= 1e-13


def test_metric_step_respects_bounds(rng):
    """With dt m (3 max G / h^2 + L / eps^2) <= 1 the limited step stays in [-1, 1]."""
    h, c, _ = _grid_case(rng)
    c = np.tanh(3 * c)
    fc = 4.0 * c * (c * c - 1.0)
    g11, g12, g22 = _metric(rng, c.shape)
    mob, inv_eps2 = 1e-3, 100.0
    gmax = float(np.max(np.maximum(g11, g22) + np.abs(g12)))
    dt = 1.0 / (mob * (3 * gmax / h**2 + 8 * inv_eps2))
    for step in (kernels.metric_step_numba, kernels.metric_step_numpy):
        out = np.zeros_like(c)
        step(c, fc, g11, g12, g22, mob, inv_eps2, h, dt, -1.0, 1.0, out)
        assert np.all(np.abs(out) <= 1.0 + 1e-12)


def test_metric_step_is_laplacian_for_identity_metric(rng):
    h, c, _ = _grid_case(rng)
    one, zero = np.ones_like(c), np.zeros_like(c)
    out, rhs = np.zeros_like(c), np.zeros_like(c)
    dt, mob = 1e-6, 1.0
    kernels.metric_step_numpy(c, zero, one, zero, one, mob, 0.0, h, dt, -2.0, 2.0, out)
    kernels.ac_rhs_numpy(c, zero, zero, zero, mob, 0.0, h, rhs)
    assert np.max(np.abs(out[1:-1, 1:-1] - (c + dt * rhs)[1:-1, 1:-1])) < 1e-12


@pytest.mark.parametrize("kind", ["single_vortex", "double_vortex"])
def test_flow_backends_agree(kind, rng):
    v = StreamVelocity(kind, 1.0)
    x0, y0 = rng.uniform(0.1, 0.9, (2, 300))
    out = []
    for use_numba in (True, False):
        x, y = x0.copy(), y0.copy()
        jac = np.zeros((4, x.size))
        jac[0] = jac[3] = 1.0
        kernels.flow_points(v.code, v.amplitude, v.stream_derivs, x, y, 0.0, 0.3, 2e-3, jac=jac, use_numba=use_numba)
        out.append(np.concatenate([x, y, jac.ravel()]))
    assert np.max(np.abs(out[0] - out[1])) <= 1e-12


def test_polyline_distance_backends_agree(rng):
    ang = np.linspace(0, 2 * np.pi, 300, endpoint=False)
    px, py = 0.5 + 0.3 * np.cos(ang), 0.5 + 0.2 * np.sin(ang)
    qx, qy = rng.uniform(0, 1, (2, 500))
    a = kernels.polyline_distance_numba(qx, qy, px, py)
    b = kernels.polyline_distance_numpy(qx, qy, px, py)
    for u, w in zip(a, b):
        assert np.max(np.abs(u - w)) <= 1e-14


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_self_intersection_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = 20
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(0.05, 0.4, n)
    vx, vy = 0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)
    if rng.uniform() < 0.5:
        vx[[3, 9]] = vx[[9, 3]]
        vy[[3, 9]] = vy[[9, 3]]
    assert kernels.self_intersections_numba(vx, vy) == kernels.self_intersections_numpy(vx, vy)


def test_star_polygon_is_self_intersecting():
    ang = 4 * np.pi * np.arange(5) / 5
    vx, vy = 0.5 + 0.3 * np.cos(ang), 0.5 + 0.3 * np.sin(ang)
    assert kernels.self_intersections_numba(vx, vy) > 0
    assert kernels.self_intersections_numpy(vx, vy) > 0


SNIPPET = "import acflow, acflow.kernels as k; print(acflow.backend_name(), k.ac_rhs.__name__)"


@pytest.mark.parametrize("flag, backend", [("0", "numba"), ("1", "numpy")])
def test_environment_switch(flag, backend):
    env = dict(os.environ, ACFLOW_DISABLE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    name, fn = res.stdout.split()
    assert name == backend and fn == f"ac_rhs_{backend}"


def test_pure_numpy_run_matches(tmp_path):
    """A short simulation gives the same snapshots on both backends."""
    code = (
        "import sys, numpy as np, warnings; warnings.simplefilter('ignore');"
        "from acflow import *; from acflow.geometry import signed_distance_circle;"
        "from acflow.fields import StreamVelocity;"
        "p = RunParams(eps=0.08, theta=3, T=0.05, n_snapshots=1, frame='lagrangian');"
        "c0 = initial_condition(p, signed_distance_circle((0.5, 0.5), 0.25, p.grid(), 0.2), build_profile());"
        "tr = simulate(p, StreamVelocity(), c0); np.save(sys.argv[1], tr.snapshots[-1].values)"
    )
    out = {}
    for flag in ("0", "1"):
        path = tmp_path / f"c{flag}.npy"
        env = dict(os.environ, ACFLOW_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", code, str(path)], env=env, check=True)
        out[flag] = np.load(path)
    assert np.max(np.abs(out["0"] - out["1"])) < 1e-12
