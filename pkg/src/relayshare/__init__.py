"""Spectrum sharing through mobile relays: channel model, follower and leader
games, a distributed matching protocol and a service-delay simulator."""
from .channel import (CapacityParams, ChannelGains, capacity_direct, capacity_relay,
                      modified_log_capacity, relay_beneficial, snr_direct, snr_relayed)
from .config import ScenarioConfig, load_config, parse_config, serialize
from .imes import ImesConfig, ImesScenario, MmdAgent, run_imes
from .lambertw import lambert_w
from .mmd_game import best_response_bandwidth, best_response_price, nash_prices
from .omd_game import EvoParams, GroupEconomics, PopulationState, evolve
from .sim import delay_sweep, generate_topology, simulate_delay

__all__ = [
    "CapacityParams", "ChannelGains", "capacity_direct", "capacity_relay", "modified_log_capacity",
    "relay_beneficial", "snr_direct", "snr_relayed", "ScenarioConfig", "load_config",
    "parse_config", "serialize", "ImesConfig", "ImesScenario", "MmdAgent", "run_imes", "lambert_w",
    "best_response_bandwidth", "best_response_price", "nash_prices", "EvoParams", "GroupEconomics",
    "PopulationState", "evolve", "delay_sweep", "generate_topology", "simulate_delay",
]
__version__ = "0.1.0"
