"""Time the numba and numpy versions of each hot kernel on the same inputs.

    python benchmarks/bench_kernels.py --n 256 --repeat 5
    python benchmarks/bench_kernels.py --end-to-end

``--end-to-end`` also runs one short simulation in two subprocesses, with
and without ACFLOW_DISABLE_NUMBA, to time the switch as users see it.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from acflow import kernels
from acflow.fields import StreamVelocity


def best_of(fn, repeat):
    fn()  # warm-up (compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(n, rng):
    h = 1.0 / (n - 1)
    c = np.clip(rng.normal(0.0, 0.6, (n, n)), -1.0, 1.0)
    fc = 4.0 * c * (c * c - 1.0)
    vx, vy = rng.normal(size=(2, n, n))
    out = np.empty_like(c)

    A = rng.normal(0.0, 1.0, (n, n, 2, 2))
    G = np.einsum("...ij,...kj->...ik", A, A) + 0.1 * np.eye(2)
    g11, g12, g22 = (np.ascontiguousarray(G[..., i, j]) for i, j in ((0, 0), (0, 1), (1, 1)))
    mob, inv_eps2 = 1e-3, 1.0 / 0.05**2
    dt = 0.1 * h * h / (mob * float(np.max(g11 + g22)))

    v = StreamVelocity()
    xs0, ys0 = rng.uniform(0.1, 0.9, (2, n * n // 4))

    ang = np.linspace(0.0, 2.0 * np.pi, 1024, endpoint=False)
    px, py = 0.5 + 0.25 * np.cos(ang), 0.5 + 0.25 * np.sin(ang)
    qx, qy = rng.uniform(0.0, 1.0, (2, 4 * n))

    def flow(use_numba):
        def run():
            x, y = xs0.copy(), ys0.copy()
            jac = np.zeros((4, x.size))
            jac[0] = jac[3] = 1.0
            kernels.flow_points(v.code, v.amplitude, v.stream_derivs, x, y, 0.0, 0.1, 2e-3, jac=jac, use_numba=use_numba)

        return run

    return [
        ("ac_rhs", lambda: kernels.ac_rhs_numba(c, fc, vx, vy, mob, inv_eps2, h, out),
         lambda: kernels.ac_rhs_numpy(c, fc, vx, vy, mob, inv_eps2, h, out)),
        ("metric_step", lambda: kernels.metric_step_numba(c, fc, g11, g12, g22, mob, inv_eps2, h, dt, -1.0, 1.0, out),
         lambda: kernels.metric_step_numpy(c, fc, g11, g12, g22, mob, inv_eps2, h, dt, -1.0, 1.0, out)),
        ("flow_points", flow(True), flow(False)),
        ("polyline_distance", lambda: kernels.polyline_distance_numba(qx, qy, px, py),
         lambda: kernels.polyline_distance_numpy(qx, qy, px, py)),
        ("self_intersections", lambda: kernels.self_intersections_numba(px, py),
         lambda: kernels.self_intersections_numpy(px, py)),
    ]


END_TO_END = (
    "import warnings; warnings.simplefilter('ignore');"
    "import time; from acflow import *; from acflow.geometry import signed_distance_circle;"
    "from acflow.fields import StreamVelocity;"
    "p = RunParams(eps=0.04, theta=3, T=0.1, n_snapshots=2, frame='lagrangian'); g = p.grid();"
    "c0 = initial_condition(p, signed_distance_circle((0.5, 0.5), 0.25, g, 0.2), build_profile());"
    "simulate(p, StreamVelocity(), c0);"
    "t = time.perf_counter(); simulate(p, StreamVelocity(), c0); print(time.perf_counter() - t, backend_name())"
)


def end_to_end():
    for flag in ("0", "1"):
        env = dict(os.environ, ACFLOW_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        secs, backend = res.stdout.split()
        print(f"{'simulate (eps=0.04, T=0.1)':24s} {backend:>6s} {float(secs) * 1e3:10.1f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="grid nodes per side")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':24s} {'numba':>10s} {'numpy':>10s} {'speed-up':>9s}")
    for name, fast, slow in kernel_cases(args.n, rng):
        tf = best_of(fast, args.repeat)
        ts = best_of(slow, args.repeat)
        print(f"{name:24s} {tf * 1e3:8.2f}ms {ts * 1e3:8.2f}ms {ts / tf:8.1f}x")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
