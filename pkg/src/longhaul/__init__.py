"""Intercontinental long-haul link inference from traceroutes, and analysis of
the resulting long-haul network at router, AS and country granularity."""

from .config import ConfigError, PipelineConfig, load_config
from .detect import LevelShiftConfig, level_shift_flags
from .geo import haversine_km, min_country_distance_km, rtt_for_distance_ms
from .lhnet import build_graph, connected_components, fit_powerlaw, k_core
from .model import (CandidateLink, Granularity, Hop, LhNetGraph, LongHaulLink, Relationship,
                    RouterPair, Traceroute)

__version__ = "0.1.0"

__all__ = ["CandidateLink", "ConfigError", "Granularity", "Hop", "LevelShiftConfig",
           "LhNetGraph", "LongHaulLink", "PipelineConfig", "Relationship", "RouterPair",
           "Traceroute", "build_graph", "connected_components", "fit_powerlaw", "haversine_km",
           "k_core", "level_shift_flags", "load_config", "min_country_distance_km",
           "rtt_for_distance_ms"]
