"""Discrete-event simulator of botnet flooding attacks on Internet Threat
Monitors, with honeypot-triggered traceback and a PPM baseline."""

from .engine import Engine, Rng, RunSummary
from .net import FloodType, Network, Subnet, build_topology, compute_routes
from .runner import Simulation, run_scenario, sweep
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    "Engine", "Rng", "RunSummary", "FloodType", "Network", "Subnet", "build_topology",
    "compute_routes", "Simulation", "run_scenario", "sweep", "Scenario", "load_scenario",
    "parse_scenario",
]

__version__ = "0.1.0"
