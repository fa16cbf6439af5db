"""Simulation and stability certification for positive transport systems with delayed boundary feedback."""

from .measure import Atom, DensityPiece, DomainError, HistorySegment, StieltjesMeasure
from .simulate import ConfigError, SimConfig, Trajectory, UnsupportedConfiguration, decay_rate, simulate
from .spectral import StabilityReport, certify, count_roots, perron_radius, rightmost_root
from .transport import GridFunction, PiecewiseConstant, TransportSystem

__all__ = [
    "Atom",
    "ConfigError",
    "DensityPiece",
    "DomainError",
    "GridFunction",
    "HistorySegment",
    "PiecewiseConstant",
    "SimConfig",
    "StabilityReport",
    "StieltjesMeasure",
    "Trajectory",
    "TransportSystem",
    "UnsupportedConfiguration",
    "certify",
    "count_roots",
    "decay_rate",
    "perron_radius",
    "rightmost_root",
    "simulate",
]
