"""Scenario configuration: JSON files, dotted ``key=value`` overrides, a
stable hash, and the objects a run is built from."""

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import StreamVelocity, TestField
from .geometry import (
    CircleDistance,
    GeometryError,
    Interface,
    PolylineDistance,
    circle_interface,
    ellipse_interface,
    signed_distance_circle,
    signed_distance_polyline,
)
from .solver import RunParams

# θ at and above which runs use the moving-node frame by default
LAGRANGIAN_THETA = 2.0

# Run keys live at the top level next to the geometry and field blocks.
RUN_KEYS = ("eps", "theta", "m0", "delta", "T", "grid_n", "dt", "snapshot_every", "n_snapshots", "boundary_value", "frame")

DEFAULTS = {
    "name": "V1",
    "eps": 0.02,
    "theta": 3.0,
    "m0": 1.0,
    "delta": 0.2,
    "grid_n": None,
    "dt": None,
    "T": 0.5,
    "snapshot_every": 1,
    "n_snapshots": 40,
    "boundary_value": 1.0,
    "frame": "auto",
    "velocity": {"kind": "single_vortex", "amplitude": 1.0},
    "testfield": {"center": [0.465, 0.59], "halfwidth": 0.25, "amplitude": 1.0},
    "initial_interface": {"type": "circle", "center": [0.5, 0.5], "radius": 0.25, "vertices": 2048},
    "sweep": {"eps_list": [0.08, 0.057, 0.04, 0.028, 0.02]},
    "approx": {"times": [0.0, 0.25]},
}


class ConfigError(ValueError):
    pass


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override(text):
    """``"velocity.amplitude=0.5"`` -> ``(["velocity", "amplitude"], 0.5)``; values are parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [k for k in key.strip().split(".") if k]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_override(cfg, text):
    path, value = parse_override(text)
    node = cfg
    for k in path[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[path[-1]] = value
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, updated by the JSON file at ``path`` and then by the overrides in order."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    for text in overrides:
        apply_override(cfg, text)
    return cfg


def config_hash(cfg):
    """First 12 hex digits of the SHA-256 of the canonical JSON form."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class Scenario:
    """Everything a run needs besides eps and theta."""

    name: str
    velocity: StreamVelocity
    interface: Interface
    distance: object
    test_field: TestField
    run: dict
    eps_list: list
    approx_times: list
    cfg_hash: str

    def frame_for(self, theta):
        frame = self.run.get("frame", "auto")
        if frame == "auto":
            return "lagrangian" if theta >= LAGRANGIAN_THETA else "eulerian"
        return frame

    def params(self, eps=None, theta=None, **changes):
        r = self.run
        theta = float(r["theta"] if theta is None else theta)
        kw = dict(
            eps=float(r["eps"] if eps is None else eps),
            theta=theta,
            m0=float(r["m0"]),
            delta=float(r["delta"]),
            T=float(r["T"]),
            snapshot_every=int(r.get("snapshot_every") or 1),
            n_snapshots=r.get("n_snapshots"),
            boundary_value=float(r["boundary_value"]),
            frame=self.frame_for(theta),
            grid_n=r.get("grid_n"),
            dt=r.get("dt"),
        )
        kw.update(changes)
        return RunParams(**kw)

    def initial_distance(self, grid, delta):
        """Signed distance of the initial interface at the grid nodes."""
        if isinstance(self.distance, CircleDistance):
            return signed_distance_circle(self.distance.center, self.distance.radius, grid, delta=delta)
        return signed_distance_polyline(self.interface, grid)


def build_scenario(cfg):
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    icfg = cfg["initial_interface"]
    kind = icfg.get("type", "circle")
    nv = int(icfg.get("vertices", 2048))
    if kind == "circle":
        center = tuple(float(c) for c in icfg["center"])
        radius = float(icfg["radius"])
        iface = circle_interface(center, radius, nv)
        distance = CircleDistance(center, radius)
    elif kind == "ellipse":
        center = tuple(float(c) for c in icfg["center"])
        iface = ellipse_interface(center, float(icfg["a"]), float(icfg["b"]), nv)
        distance = PolylineDistance(iface)
    elif kind == "polyline":
        iface = Interface.from_csv(Path(icfg["path"]))
        distance = PolylineDistance(iface)
    else:
        raise ConfigError(f"unknown interface type {kind!r}")
    try:
        iface.check()
    except GeometryError as exc:
        raise ConfigError(f"invalid initial interface: {exc}") from exc
    eps_list = [float(e) for e in cfg.get("sweep", {}).get("eps_list", [])]
    return Scenario(
        name=str(cfg.get("name", "scenario")),
        velocity=StreamVelocity.from_config(cfg.get("velocity")),
        interface=iface,
        distance=distance,
        test_field=TestField.from_config(cfg.get("testfield")),
        run={k: cfg[k] for k in RUN_KEYS},
        eps_list=eps_list,
        approx_times=[float(t) for t in cfg.get("approx", {}).get("times", [0.0])],
        cfg_hash=config_hash(cfg),
    )


def snapshot_times(params):
    """Nominal snapshot times of a run with ``n_snapshots`` set."""
    if not params.n_snapshots:
        raise ConfigError("snapshot times are only fixed in advance when n_snapshots is set")
    return np.linspace(0.0, params.T, params.n_snapshots + 1)
