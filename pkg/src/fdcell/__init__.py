"""System-level simulator for full-duplex multi-cell TDD networks.

Small indoor/outdoor multi-cell deployments where full-duplex base stations
serve half-duplex UEs. The package provides channel generation, proportional
fair scheduling with distributed or centralized UE selection, signomial
power allocation via successive convex approximation, half-duplex baselines,
an FTP traffic model, and a campaign runner with CSV/JSON reporting.
"""

from .topology import Topology, generate_indoor_topology, generate_outdoor_topology
from .channel import ChannelModelParams, ChannelGains, compute_channel_gains
from .linklayer import LinkBudget, ScheduleDecision, PowerAllocation, noise_power, rate
from .pf import RateTracker, chi, cell_utility, network_objective
from .gpsolver import (
    PowerProblem,
    SolverConfig,
    SolverReport,
    solve_signomial,
    brute_force_power_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "Topology",
    "generate_indoor_topology",
    "generate_outdoor_topology",
    "ChannelModelParams",
    "ChannelGains",
    "compute_channel_gains",
    "LinkBudget",
    "ScheduleDecision",
    "PowerAllocation",
    "noise_power",
    "rate",
    "RateTracker",
    "chi",
    "cell_utility",
    "network_objective",
    "PowerProblem",
    "SolverConfig",
    "SolverReport",
    "solve_signomial",
    "brute_force_power_oracle",
]
