"""Flit-level 2D-mesh NoC simulator with lookahead congestion-aware routing."""

from .congestion import CongestionPayload, CongestionTable, build_payload, encode_congestion_bit
from .core import ALGORITHMS, PATTERNS, ConfigError, Coord, Direction, SimConfig
from .router import FlowControlError
from .routing import route_dbar_like, route_dor, route_local_adaptive, route_nocpn
from .sim import SimStats, SweepResult, run_simulation, sweep, zero_load_latency

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "PATTERNS",
    "ConfigError",
    "CongestionPayload",
    "CongestionTable",
    "Coord",
    "Direction",
    "FlowControlError",
    "SimConfig",
    "SimStats",
    "SweepResult",
    "build_payload",
    "encode_congestion_bit",
    "route_dbar_like",
    "route_dor",
    "route_local_adaptive",
    "route_nocpn",
    "run_simulation",
    "sweep",
    "zero_load_latency",
]
