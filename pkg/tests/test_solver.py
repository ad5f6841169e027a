import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acflow.fields import StreamVelocity
from acflow.geometry import circle_interface, extract_zero_contour, hausdorff_distance, signed_distance_circle
from acflow.grid import Grid, ScalarField
from acflow.oracles import fit_circle_radius, transport_oracle
from acflow.profile import Cutoff
from acflow.solver import (
    RunParams,
    SolverError,
    initial_condition,
    layered_profile,
    read_snapshot,
    simulate,
    snapshot_name,
    stability_dt,
    step,
    write_snapshot,
)

VORTEX = StreamVelocity("single_vortex", 1.0)
ZERO = StreamVelocity("zero", 0.0)


def circle_start(params, profile, radius=0.25):
    g = params.grid()
    return initial_condition(params, signed_distance_circle((0.5, 0.5), radius, g, params.delta), profile)


# ---------------------------------------------------------------------------
# parameters and initial value
# ---------------------------------------------------------------------------


def test_run_params_validation():
    p = RunParams(eps=0.04, theta=3.0, m0=2.0)
    assert p.mobility == pytest.approx(2.0 * 0.04**3)
    for bad in (dict(eps=0.0), dict(eps=1.5), dict(theta=-1.0), dict(m0=0.0), dict(frame="spectral"),
                dict(boundary_value=0.5), dict(snapshot_every=0), dict(T=-1.0)):
        kw = dict(eps=0.04, theta=1.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            RunParams(**kw)


def test_grid_resolution_enforced():
    with pytest.raises(ValueError):
        RunParams(eps=0.04, theta=1.0, grid_n=65).grid()
    assert RunParams(eps=0.04, theta=1.0).grid().h <= 0.01


def test_layered_profile_examples(profile):
    eps, delta = 0.02, 0.2
    zeta = Cutoff()
    d = np.array([0.0, 2 * delta, -2 * delta, eps])
    c = layered_profile(d, eps, delta, profile, zeta)
    assert c[0] == 0.0
    assert c[1] == 1.0 and c[2] == -1.0
    assert c[3] == pytest.approx(math.tanh(math.sqrt(2.0)), abs=1e-8)
    assert c[3] == pytest.approx(0.88839, abs=1e-5)


def test_initial_condition_range_and_sign(profile):
    p = RunParams(eps=0.04, theta=1.0)
    c0 = circle_start(p, profile)
    assert np.all(np.abs(c0.values) <= 1.0)
    assert c0.values[p.grid().n // 2, p.grid().n // 2] == -1.0
    assert c0.values[0, 0] == 1.0
    flipped = initial_condition(p.replace(boundary_value=-1.0), signed_distance_circle((0.5, 0.5), 0.25, p.grid()), profile)
    assert np.array_equal(flipped.values, -c0.values)


@settings(max_examples=50)
@given(st.floats(-0.5, 0.5, allow_nan=False))
def test_layered_profile_is_odd_and_bounded(profile, d):
    zeta = Cutoff()
    a = float(layered_profile(np.array(d), 0.03, 0.2, profile, zeta))
    b = float(layered_profile(np.array(-d), 0.03, 0.2, profile, zeta))
    assert -1.0 <= a <= 1.0
    if d != 0.0:
        assert a == pytest.approx(-b, abs=1e-10)


# ---------------------------------------------------------------------------
# time step
# ---------------------------------------------------------------------------


def test_stability_dt_advection_limited():
    p = RunParams(eps=0.04, theta=3.0, m0=1.0)
    assert stability_dt(p, Grid(101), 1.0) == pytest.approx(0.004)


def test_stability_dt_reaction_diffusion_limited():
    p = RunParams(eps=0.04, theta=0.0, m0=1.0)
    g = Grid(101)
    assert g.h == pytest.approx(0.04 / 4)
    expected = 0.4 * min(g.h**2 / 4, 0.04**2 / 8)
    assert stability_dt(p, g, 1.0) == pytest.approx(expected)
    assert stability_dt(p, g, 0.0) == pytest.approx(expected)


def test_stability_dt_without_velocity():
    p = RunParams(eps=0.04, theta=3.0)
    assert stability_dt(p, Grid(101), 0.0) > stability_dt(p, Grid(101), 1.0)


def test_step_rejects_large_dt(profile):
    p = RunParams(eps=0.04, theta=0.0)
    c0 = circle_start(p, profile)
    with pytest.raises(SolverError):
        step(c0, p, ZERO, 0.0, dt=1e-2)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def test_constant_state_is_equilibrium():
    p = RunParams(eps=0.04, theta=0.0)
    g = p.grid()
    c = ScalarField(np.ones((g.n, g.n)), g)
    out = step(c, p, VORTEX, 0.0)
    assert np.array_equal(out.values, c.values)


def test_zero_state_stays_zero_for_one_step():
    p = RunParams(eps=0.04, theta=0.0)
    g = p.grid()
    c = ScalarField(np.zeros((g.n, g.n)), g)
    out = step(c, p, ZERO, 0.0)
    # the boundary value enters the first ring through the Laplacian only
    assert np.all(out.values[2:-2, 2:-2] == 0.0)


def test_flat_front_is_steady(profile):
    """A tanh front is the travelling-wave equilibrium; the stencil drifts by O(h^2)."""
    drift = []
    for cells in (4, 8):
        eps = 0.1
        p = RunParams(eps=eps, theta=0.0, grid_n=int(cells / eps) + 1, boundary_value=1.0)
        g = p.grid()
        X, _ = g.mesh()
        c = ScalarField(profile((X - 0.5) / eps), g)
        dt = stability_dt(p, g, 0.0)
        out = c
        nsteps = int(math.ceil(0.002 / dt))
        for k in range(nsteps):
            out = step(out, p, ZERO, k * dt, dt=dt)
        interior = slice(g.n // 4, 3 * g.n // 4)
        drift.append(np.max(np.abs(out.values[interior, interior] - c.values[interior, interior])) / (nsteps * dt))
    assert drift[1] < drift[0] / 3.0


# ---------------------------------------------------------------------------
# whole runs
# ---------------------------------------------------------------------------


def test_zero_final_time_gives_one_snapshot(profile):
    p = RunParams(eps=0.04, theta=1.0, T=0.0)
    c0 = circle_start(p, profile)
    traj = simulate(p, VORTEX, c0)
    assert len(traj) == 1 and traj.nsteps == 0
    assert np.array_equal(traj.snapshots[0].values, c0.values)


@pytest.mark.parametrize("frame", ["eulerian", "lagrangian"])
def test_run_invariants(profile, frame):
    p = RunParams(eps=0.04, theta=2.0, T=0.1, n_snapshots=4, frame=frame)
    traj = simulate(p, VORTEX, circle_start(p, profile))
    assert len(traj) == 5
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(0.1)
    assert traj.max_slack <= 1e-6
    for k in range(len(traj)):
        c = traj.eulerian(k).values
        assert np.all(np.abs(c) <= 1.0 + 1e-6)
        for edge in (c[0], c[-1], c[:, 0], c[:, -1]):
            assert np.all(edge == 1.0)


def test_snapshot_every(profile):
    p = RunParams(eps=0.04, theta=3.0, T=0.01, dt=0.002, snapshot_every=2)
    traj = simulate(p, VORTEX, circle_start(p, profile))
    assert [s.step for s in traj.snapshots] == [0, 2, 4, 5]


@pytest.mark.parametrize("frame", ["eulerian", "lagrangian"])
def test_energy_decreases_without_flow(profile, frame):
    p = RunParams(eps=0.04, theta=0.0, T=0.01, n_snapshots=10, frame=frame)
    traj = simulate(p, ZERO, circle_start(p, profile))
    e = np.array([s.energy for s in traj.snapshots])
    assert np.all(np.diff(e) <= 1e-8 * e[0])
    assert e[-1] < e[0]


def test_frames_agree_without_flow(profile):
    p = RunParams(eps=0.04, theta=0.0, T=0.005, n_snapshots=1)
    a = simulate(p, ZERO, circle_start(p, profile))
    b = simulate(p.replace(frame="lagrangian"), ZERO, circle_start(p, profile))
    assert np.max(np.abs(a.snapshots[-1].values - b.snapshots[-1].values)) < 5e-3


def test_radius_nearly_fixed_without_flow(profile):
    p = RunParams(eps=0.04, theta=1.0, T=0.05, n_snapshots=1)
    traj = simulate(p, ZERO, circle_start(p, profile))
    r = fit_circle_radius(extract_zero_contour(traj.field(1)))[0]
    assert abs(r - 0.25) < p.eps


def test_vortex_contour_tracks_transport(profile):
    p = RunParams(eps=0.04, theta=3.0, T=0.25, n_snapshots=1, frame="lagrangian")
    traj = simulate(p, VORTEX, circle_start(p, profile))
    ref = transport_oracle(circle_interface((0.5, 0.5), 0.25, 1024), VORTEX, p.T)
    assert hausdorff_distance(extract_zero_contour(traj.eulerian(1)), ref) <= 2 * p.eps


def test_explicit_dt_above_bound_rejected(profile):
    p = RunParams(eps=0.04, theta=0.0, T=0.01, dt=1e-2)
    with pytest.raises(SolverError):
        simulate(p, ZERO, circle_start(p, profile))


def test_snapshot_file_round_trip(tmp_path, profile):
    p = RunParams(eps=0.04, theta=3.0, T=0.01, n_snapshots=1, frame="lagrangian")
    traj = simulate(p, VORTEX, circle_start(p, profile))
    paths = traj.write(tmp_path)
    assert [p_.split("/")[-1] for p_ in paths] == [snapshot_name(0.04, 3.0, k) for k in range(2)]
    assert paths[0].endswith("c_eps0.04_theta3_t0000.dat")
    back = read_snapshot(paths[-1])
    assert back.time == pytest.approx(0.01)
    assert np.array_equal(back.values, traj.eulerian(1).values)
    head = open(paths[-1]).readline().split()
    assert int(head[0]) == traj.grid.n and len(head) == 3


def test_snapshot_header_checked(tmp_path):
    g = Grid(33)
    f = ScalarField(np.zeros((33, 33)), g, time=0.5)
    path = tmp_path / "x.dat"
    write_snapshot(path, f)
    text = path.read_text().splitlines()
    text[0] = "33 0.5 0.5"
    path.write_text("\n".join(text))
    with pytest.raises(ValueError):
        read_snapshot(path)
