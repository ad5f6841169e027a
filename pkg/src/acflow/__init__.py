"""Allen-Cahn dynamics under a prescribed divergence-free flow and their
sharp-interface limits, checked numerically."""

from ._accel import backend_name
from .config import build_scenario, load_config
from .profile import build_profile
from .solver import RunParams, initial_condition, simulate

__version__ = "0.1.0"

__all__ = ["RunParams", "backend_name", "build_profile", "build_scenario", "initial_condition", "load_config", "simulate"]
