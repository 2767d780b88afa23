"""Transient simulation of multi-machine power systems under decentralized
Lyapunov-based excitation and governor control."""

from __future__ import annotations

from exgov.certify import build_surrogate, controllability_rank, gas_certificate, vdot_series
from exgov.controller import ClosedLoop, ControllerConfig, GainBlocks, SurrogateConstants
from exgov.errors import ExgovError, SimulationDiverged
from exgov.plant import Kind
from exgov.scenarios import (
    ScenarioConfig,
    Trajectory,
    cct_search,
    fault_scenario,
    load_config,
    pr_scenario,
    run,
    vr_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ClosedLoop", "ControllerConfig", "ExgovError", "GainBlocks", "Kind", "SimulationDiverged",
    "ScenarioConfig", "SurrogateConstants", "Trajectory", "build_surrogate", "cct_search",
    "controllability_rank", "fault_scenario", "gas_certificate", "load_config", "pr_scenario", "run",
    "vdot_series", "vr_scenario",
]
