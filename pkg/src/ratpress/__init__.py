"""Numerical pressure functions of rational maps of the Riemann sphere."""

from .maps import CPoint, MapSpec, critical_points, detect_exceptional, find_periodic_points, load_map
from .backward import backward_tree, tree_pressure_estimate
from .pressure import PressureConfig, PressureCurve, assemble_pressure

__version__ = "0.1.0"

__all__ = [
    "CPoint",
    "MapSpec",
    "PressureConfig",
    "PressureCurve",
    "assemble_pressure",
    "backward_tree",
    "critical_points",
    "detect_exceptional",
    "find_periodic_points",
    "load_map",
    "tree_pressure_estimate",
]
