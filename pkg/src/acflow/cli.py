"""Batch driver: scenario runs, eps sweeps, rate fits and CSV output.

Every CSV starts with a ``#`` line carrying the table name and the config
hash; column names carry their units in brackets (the model is
nondimensional, so most read ``[1]``).
"""

import argparse
import csv
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .approx import ApproxSolution, difference_norms, approx_norms
from .config import ConfigError, build_scenario, config_hash, load_config, snapshot_times
from .geometry import (
    CircleDistance,
    FlowMap,
    GeometryError,
    extract_zero_contour,
    hausdorff_distance,
    make_interface,
    stretch_factor,
)
from .oracles import OracleError, fit_circle_radius, mcf_oracle, shrinking_circle_radius, transport_oracle
from .profile import build_profile
from .solver import initial_condition, simulate
from .functionals import fit_stretch_summary, limit_functional, profile_fit, snapshot_heps, time_integrated

log = logging.getLogger("acflow")

SIGMA_EXACT = 2.0 * math.sqrt(2.0) / 3.0
MIN_RATE_POINTS = 4
R2_FLAG = 0.9

UNITS = {
    "eps": "length",
    "t": "time",
    "T": "time",
    "dt": "time",
    "theta": "1",
    "z": "1",
    "h": "length",
    "hausdorff": "length",
    "radius": "length",
    "radius_exact": "length",
    "radius_fit_if_circle": "length",
    "hausdorff_to_solver_contour": "length",
}

# exponents of the analytic norm bounds (gradient, Laplacian, f, indicator)
APPROX_NORM_THEORY = {"grad_L2": -0.5, "lap_L2": -1.5, "f_L2": 0.5, "indicator_L2": 0.5}


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _unit(name):
    return UNITS.get(name, "1")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, table, rows, cfg_hash, columns=None):
    """Rows (dicts) to CSV with the hash line and unit-annotated header."""
    columns = columns or (list(rows[0].keys()) if rows else [])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# acflow {table} config_hash={cfg_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{c}[{_unit(c)}]" for c in columns])
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: (rows with bare column names, config hash)."""
    with open(path) as fh:
        first = fh.readline()
        cfg_hash = first.split("config_hash=")[-1].strip() if first.startswith("#") else ""
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.reader(fh)
        header = [h.split("[")[0] for h in next(reader)]
        rows = []
        for rec in reader:
            row = {}
            for k, v in zip(header, rec):
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return rows, cfg_hash


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    quantity: str
    slope: float
    intercept: float
    r_squared: float

    @property
    def flagged(self):
        return self.r_squared < R2_FLAG


def fit_rates(table, quantity, eps_key="eps"):
    """Least-squares line through (log eps, log value) over the rows of ``table``."""
    eps = np.array([float(r[eps_key]) for r in table])
    val = np.array([float(r[quantity]) for r in table])
    if len(val) < MIN_RATE_POINTS:
        raise ValueError(f"rate fit of {quantity} needs at least {MIN_RATE_POINTS} values, got {len(val)}")
    if np.any(~np.isfinite(val)) or np.any(val <= 0.0) or np.any(eps <= 0.0):
        raise ValueError(f"rate fit of {quantity} needs positive finite values")
    x = np.log(eps)
    y = np.log(val)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= len(y) * (1e-12 * max(1.0, float(np.max(np.abs(y))))) ** 2 else 1.0 - float(np.sum(resid**2)) / ss_tot
    if abs(slope) < 1e-12:
        slope = 0.0
    return RateFit(quantity, float(slope), float(intercept), float(r2))


# ---------------------------------------------------------------------------
# single-run measurements
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    eps_list: list
    theta: float
    scenario: dict
    outputs: str = None

    def __post_init__(self):
        eps = [float(e) for e in self.eps_list]
        if len(eps) < MIN_RATE_POINTS:
            raise ValueError(f"a sweep needs at least {MIN_RATE_POINTS} eps values for rate fits, got {len(eps)}")
        if len(set(eps)) != len(eps):
            raise ValueError("duplicate eps values in the sweep")
        if any(e <= 0 for e in eps):
            raise ValueError("eps values must be positive")
        self.eps_list = sorted(eps, reverse=True)


@dataclass
class SweepResult:
    rows: List[dict] = field(default_factory=list)
    summary: List[dict] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)
    limits: dict = None


def sharp_limits(scenario, params, profile):
    """Per-snapshot stretched and sharp limit functionals along the transported interface."""
    times = snapshot_times(params)
    phi = scenario.test_field
    fmap = FlowMap(scenario.velocity, step=params.flow_step)
    stretched, sharp = [], []
    for t in times:
        iface = transport_oracle(scenario.interface, scenario.velocity, float(t), step=params.flow_step)
        s = stretch_factor(scenario.distance, fmap, iface.vertices, float(t))
        stretched.append(limit_functional(iface, phi, profile.sigma, s))
        sharp.append(limit_functional(iface, phi, profile.sigma))
    st_int = time_integrated(times, stretched)
    sh_int = time_integrated(times, sharp)
    return {
        "times": times,
        "stretched": np.array(stretched),
        "sharp": np.array(sharp),
        "stretched_int": st_int,
        "sharp_int": sh_int,
        "g0": 0.5 * abs(st_int - sh_int),
    }


def run_simulation(scenario, params, profile):
    grid = params.grid()
    d0 = scenario.initial_distance(grid, params.delta)
    c0 = initial_condition(params, d0, profile)
    return simulate(params, scenario.velocity, c0)


def oracle_interfaces(scenario, params, times):
    """Reference interfaces at ``times``: curvature flow for theta = 0, transport otherwise.

    Curvature flow is tracked at a vertex spacing no finer than the run grid,
    since its explicit step shrinks with the square of the spacing.
    """
    times = [float(t) for t in times]
    if params.theta != 0.0:
        return [transport_oracle(scenario.interface, scenario.velocity, t, step=params.flow_step) for t in times]
    spacing = max(float(np.mean(scenario.interface.spacing)), params.grid().h)
    iface = make_interface(scenario.interface.vertices, spacing=spacing)
    out, t_prev = [], 0.0
    for t in times:
        if t > t_prev:
            iface = mcf_oracle(iface, scenario.velocity, params.m0, t - t_prev, spacing=spacing, t0=t_prev)
            t_prev = t
        out.append(iface)
    return out


def motion_errors(scenario, traj, k=None):
    """Hausdorff distance of the zero contour of snapshot ``k`` (default last) to the
    matching oracle, and the relative drift of the enclosed area."""
    p = traj.params
    k = len(traj) - 1 if k is None else k
    out = {"hausdorff": float("nan"), "area_drift": float("nan")}
    try:
        iface = extract_zero_contour(traj.eulerian(k))
    except GeometryError as exc:
        log.warning("eps=%g: no usable zero contour at t=%g (%s)", p.eps, traj.times[k], exc)
        return out, None
    ref = oracle_interfaces(scenario, p, [traj.times[k]])[0]
    out["hausdorff"] = hausdorff_distance(iface, ref)
    a0 = scenario.interface.area()
    out["area_drift"] = abs(iface.area() - a0) / a0
    return out, iface


def motion_law_rows(scenario, traj):
    """One row per snapshot: Hausdorff distance of the solver contour to the oracle,
    and for circular initial data the fitted radius (with the exact one for
    pure curvature flow)."""
    p = traj.params
    refs = oracle_interfaces(scenario, p, traj.times)
    circle = isinstance(scenario.distance, CircleDistance)
    exact = circle and p.theta == 0.0 and scenario.velocity.kind == "zero"
    rows = []
    for k, t in enumerate(traj.times):
        row = {"t": float(t), "hausdorff_to_solver_contour": float("nan"), "radius_fit_if_circle": ""}
        try:
            iface = extract_zero_contour(traj.eulerian(k))
        except GeometryError as exc:
            log.warning("t=%g: no usable zero contour (%s)", t, exc)
            rows.append(row)
            continue
        row["hausdorff_to_solver_contour"] = hausdorff_distance(iface, refs[k])
        if circle:
            row["radius_fit_if_circle"] = fit_circle_radius(iface)[0]
        if exact:
            row["radius_exact"] = shrinking_circle_radius(scenario.distance.radius, p.m0, float(t))
        rows.append(row)
    return rows


def measure_run(scenario, eps, theta, limits=None, profile=None):
    """Simulate one eps and collect every per-snapshot and summary measurement."""
    profile = profile or build_profile()
    params = scenario.params(eps=eps, theta=theta)
    traj = run_simulation(scenario, params, profile)
    approx = ApproxSolution(params, scenario.distance, scenario.velocity, profile)
    dn = difference_norms(traj, approx)
    summary = {
        "eps": params.eps,
        "theta": params.theta,
        "frame": params.frame,
        "grid_n": traj.grid.n,
        "dt": traj.dt,
        "nsteps": traj.nsteps,
        "max_slack": traj.max_slack,
        "sup_L2": dn.sup_L2,
        "eps_grad_sq": dn.eps_grad_sq,
        "indicator_sq": dn.indicator_sq_spacetime,
    }
    rows = []
    H = HA = None
    if limits is not None:
        if len(traj.times) != len(limits["times"]) or not np.allclose(traj.times, limits["times"], atol=1e-12):
            raise RuntimeError("snapshot times of the run differ from those of the limit functionals")
        pairs = [snapshot_heps(traj, k, scenario.test_field, approx) for k in range(len(traj))]
        H = np.array([p[0] for p in pairs])
        HA = np.array([p[1] for p in pairs])
        h_int = time_integrated(traj.times, H)
        ha_int = time_integrated(traj.times, HA)
        summary.update(
            H_int=h_int,
            HA_int=ha_int,
            stretched_int=limits["stretched_int"],
            sharp_int=limits["sharp_int"],
            gap_stretched=abs(h_int - limits["stretched_int"]),
            rel_gap_stretched=abs(h_int - limits["stretched_int"]) / abs(limits["stretched_int"]),
            gap_sharp=abs(h_int - limits["sharp_int"]),
            g0=limits["g0"],
            H_minus_HA=abs(h_int - ha_int),
        )
    motion, _ = motion_errors(scenario, traj)
    summary.update(motion)
    for k, s in enumerate(traj.snapshots):
        row = {
            "eps": params.eps,
            "theta": params.theta,
            "t": s.time,
            "u_L2": float(dn.per_snapshot_L2[k]),
            "mass": s.mass,
            "energy": s.energy,
            "slack": s.slack,
        }
        if H is not None:
            row.update(H=H[k], HA=HA[k], stretched=limits["stretched"][k], sharp=limits["sharp"][k])
        rows.append(row)
    return rows, summary


def _sweep_worker(args):
    cfg, eps, theta, limits = args
    scenario = build_scenario(cfg)
    try:
        rows, summary = measure_run(scenario, eps, theta, limits)
        return {"eps": eps, "rows": rows, "summary": summary, "error": None}
    except Exception as exc:  # a failed run is recorded and the sweep continues
        return {"eps": eps, "rows": [], "summary": None, "error": f"{type(exc).__name__}: {exc}", "trace": traceback.format_exc()}


def run_sweep(spec, workers=1, with_functionals=True):
    """Run every eps of ``spec`` (in a process pool when ``workers > 1``); results keep config order.

    The limit functionals (and the gap g0 between them) are computed once
    before the runs are dispatched.
    """
    cfg = spec.scenario
    scenario = build_scenario(cfg)
    profile = build_profile()
    limits = None
    if with_functionals:
        limits = sharp_limits(scenario, scenario.params(eps=spec.eps_list[0], theta=spec.theta), profile)
        if not limits["g0"] > 0.0:
            raise ValueError("stretched and sharp limit functionals coincide; choose another test field")
        log.info("limit functionals: stretched %.6g, sharp %.6g, g0 %.6g", limits["stretched_int"], limits["sharp_int"], limits["g0"])
    jobs = [(cfg, eps, spec.theta, limits) for eps in spec.eps_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    out = SweepResult(limits=limits)
    for res in results:
        if res["error"]:
            log.error("eps=%g failed: %s", res["eps"], res["error"])
            out.failures.append({"eps": res["eps"], "error": res["error"]})
            continue
        out.rows.extend(res["rows"])
        out.summary.append(res["summary"])
    if spec.outputs:
        h = config_hash(cfg)
        if out.rows:
            write_csv(os.path.join(spec.outputs, "sweep_snapshots.csv"), "sweep_snapshots", out.rows, h)
        if out.summary:
            write_csv(os.path.join(spec.outputs, "sweep_summary.csv"), "sweep_summary", out.summary, h)
        if out.failures:
            write_csv(os.path.join(spec.outputs, "sweep_failures.csv"), "sweep_failures", out.failures, h)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_profile_check(cfg, args):
    p = build_profile()
    h = config_hash(cfg)
    rows = [{"z": z, "theta0": a, "dtheta0": b} for z, a, b in zip(p.z_grid, p.theta0, p.theta0_prime)]
    write_csv(os.path.join(args.out, "profile.csv"), "profile", rows, h)
    tanh_err = float(np.max(np.abs(p.theta0 - np.tanh(np.sqrt(2.0) * p.z_grid))))
    summary = {
        "residual": p.residual,
        "sigma": p.sigma,
        "sigma_error": abs(p.sigma - SIGMA_EXACT),
        "tanh_error": tanh_err,
    }
    write_csv(os.path.join(args.out, "profile_summary.csv"), "profile_summary", [summary], h)
    ok = p.residual <= 1e-8 and summary["sigma_error"] <= 1e-6
    print(f"residual {p.residual:.3e}  sigma {p.sigma:.12f}  |sigma - 2 sqrt2/3| {summary['sigma_error']:.3e}  {'ok' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_simulate(cfg, args):
    scenario = build_scenario(cfg)
    profile = build_profile()
    params = scenario.params()
    traj = run_simulation(scenario, params, profile)
    paths = traj.write(args.out)
    rows = [
        {"index": s.index, "step": s.step, "t": s.time, "mass": s.mass, "energy": s.energy, "slack": s.slack}
        for s in traj.snapshots
    ]
    write_csv(os.path.join(args.out, "snapshots.csv"), "snapshots", rows, config_hash(cfg))
    print(f"{len(paths)} snapshots, dt {traj.dt:.3e}, {traj.nsteps} steps, frame {params.frame}, max slack {traj.max_slack:.2e}")
    return 0


def cmd_approx_norms(cfg, args):
    scenario = build_scenario(cfg)
    profile = build_profile()
    theta = float(scenario.run["theta"])
    rows = []
    for t in scenario.approx_times:
        for eps in scenario.eps_list:
            a = ApproxSolution(scenario.params(eps=eps, theta=theta), scenario.distance, scenario.velocity, profile)
            n = approx_norms(a, t)
            rows.append({"eps": eps, "theta": theta, "t": t, **n._asdict()})
    h = config_hash(cfg)
    write_csv(os.path.join(args.out, "approx_norms.csv"), "approx_norms", rows, h)
    fits = []
    for t in scenario.approx_times:
        sub = [r for r in rows if r["t"] == t]
        for q, theory in APPROX_NORM_THEORY.items():
            f = fit_rates(sub, q)
            fits.append({"t": t, "quantity": q, "slope": f.slope, "theory": theory, "r_squared": f.r_squared, "flagged": f.flagged})
            print(f"t={t:g} {q:13s} slope {f.slope:+.3f} (theory {theory:+.1f}) r2 {f.r_squared:.4f}")
    write_csv(os.path.join(args.out, "approx_rates.csv"), "approx_rates", fits, h)
    return 0


FUNCTIONAL_COLUMNS = ("eps", "theta", "t", "h_eps", "h_eps_A", "limit_stretched", "limit_sharp", "gap_stretched", "gap_sharp")


def functional_rows(res):
    """Per-snapshot functional rows of a sweep, then one time-integrated row per eps
    (``t`` set to ``"int"``)."""
    rows = []
    for r in res.rows:
        rows.append({
            "eps": r["eps"], "theta": r["theta"], "t": r["t"],
            "h_eps": r["H"], "h_eps_A": r["HA"],
            "limit_stretched": r["stretched"], "limit_sharp": r["sharp"],
            "gap_stretched": abs(r["H"] - r["stretched"]), "gap_sharp": abs(r["H"] - r["sharp"]),
        })
    for s in res.summary:
        rows.append({
            "eps": s["eps"], "theta": s["theta"], "t": "int",
            "h_eps": s["H_int"], "h_eps_A": s["HA_int"],
            "limit_stretched": s["stretched_int"], "limit_sharp": s["sharp_int"],
            "gap_stretched": s["gap_stretched"], "gap_sharp": s["gap_sharp"],
        })
    return rows


def cmd_functional_compare(cfg, args):
    scenario = build_scenario(cfg)
    spec = SweepSpec(scenario.eps_list, float(scenario.run["theta"]), cfg, outputs=args.out)
    res = run_sweep(spec, workers=args.workers)
    if res.summary:
        write_csv(os.path.join(args.out, "functionals.csv"), "functionals", functional_rows(res), config_hash(cfg), FUNCTIONAL_COLUMNS)
    for s in res.summary:
        print(
            f"eps {s['eps']:<7g} H {s['H_int']:+.5f}  stretched gap {s['rel_gap_stretched']:.4f} (rel)"
            f"  sharp gap {s['gap_sharp']:.4f} (g0 {s['g0']:.4f})  |H - H_A| {s['H_minus_HA']:.4f}"
        )
    return 1 if res.failures else 0


def cmd_motion_law(cfg, args):
    scenario = build_scenario(cfg)
    profile = build_profile()
    params = scenario.params()
    traj = run_simulation(scenario, params, profile)
    h = config_hash(cfg)
    per_time = motion_law_rows(scenario, traj)
    write_csv(os.path.join(args.out, "motion_law.csv"), "motion_law", per_time, h)
    errs, iface = motion_errors(scenario, traj)
    row = {"eps": params.eps, "theta": params.theta, "T": params.T, **errs, "max_slack": traj.max_slack}
    if iface is not None:
        fit = profile_fit(traj.sampler(len(traj) - 1), iface, profile, params.eps, orientation=params.boundary_value)
        st = stretch_factor(scenario.distance, FlowMap(scenario.velocity, step=params.flow_step), iface.vertices, params.T)
        near_one, match, dev = fit_stretch_summary(fit, st)
        row.update(fraction_s_near_1=near_one, fraction_s_matches_stretch=match, max_abs_s_minus_1=dev)
    write_csv(os.path.join(args.out, "motion_law_summary.csv"), "motion_law_summary", [row], h)
    print(", ".join(f"{k} {_fmt(v)}" for k, v in row.items()))
    return 0


def cmd_sweep(cfg, args):
    scenario = build_scenario(cfg)
    spec = SweepSpec(scenario.eps_list, float(scenario.run["theta"]), cfg, outputs=args.out)
    res = run_sweep(spec, workers=args.workers)
    for s in res.summary:
        print(f"eps {s['eps']:<7g} sup_L2 {s['sup_L2']:.4e}  eps|grad u|^2 {s['eps_grad_sq']:.4e}  slack {s['max_slack']:.1e}")
    for f in res.failures:
        print(f"eps {f['eps']:<7g} FAILED: {f['error']}")
    return 1 if res.failures else 0


RATE_QUANTITIES = ("sup_L2", "eps_grad_sq", "indicator_sq", "H_minus_HA", "gap_stretched")


def cmd_rates(cfg, args):
    path = args.table or os.path.join(args.out, "sweep_summary.csv")
    table, h = read_csv(path)
    fits = []
    for q in args.quantity or RATE_QUANTITIES:
        if not table or q not in table[0]:
            continue
        f = fit_rates(table, q)
        fits.append({"quantity": q, "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared, "flagged": f.flagged})
        print(f"{q:18s} slope {f.slope:+.3f}  r2 {f.r_squared:.4f}{'  (poor fit)' if f.flagged else ''}")
    write_csv(os.path.join(args.out, "rates.csv"), "rates", fits, h)
    return 0


COMMANDS = {
    "profile-check": cmd_profile_check,
    "simulate": cmd_simulate,
    "approx-norms": cmd_approx_norms,
    "functional-compare": cmd_functional_compare,
    "motion-law": cmd_motion_law,
    "sweep": cmd_sweep,
    "rates": cmd_rates,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="acflow", description="Allen-Cahn sharp-interface checks under transport.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario JSON (defaults give scenario V1)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="processes for sweeps")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted config override, repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "rates":
            p.add_argument("--table", help="summary CSV (default <out>/sweep_summary.csv)")
            p.add_argument("--quantity", action="append", help="column to fit, repeatable")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.override)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError, GeometryError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
