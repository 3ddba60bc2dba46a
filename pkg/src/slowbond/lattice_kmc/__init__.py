"""Exact continuous-time simulation of the exclusion process with one slow bond."""

from .config import (ConfigError, SimulationConfig, format_config, load_config,
                     min_half_width, parse_config_text)
from .packed import (LANES, PackedCounters, PackedLattice, advance_packed,
                     advance_packed_integrals, advance_packed_timed, pack_bits, sample_packed,
                     unpack_bits)
from .state import (EventLog, LatticeState, conductance, replica_rng, sample_bernoulli_product,
                    sample_profile, step_to_time)

__all__ = [
    "ConfigError", "SimulationConfig", "format_config", "load_config", "min_half_width",
    "parse_config_text", "LANES", "PackedCounters", "PackedLattice", "advance_packed",
    "advance_packed_integrals", "advance_packed_timed", "pack_bits", "sample_packed", "unpack_bits", "EventLog",
    "LatticeState", "conductance", "replica_rng", "sample_bernoulli_product", "sample_profile",
    "step_to_time",
]
