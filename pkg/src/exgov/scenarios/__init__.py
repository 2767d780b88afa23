"""Scenario configuration, simulation loop, experiments and export."""

from __future__ import annotations

from exgov.scenarios.config import ReferenceStep, ScenarioConfig, builtin_names, load_config, parse_config
from exgov.scenarios.experiments import (
    CctResult,
    ScenarioResult,
    Verdict,
    cct_search,
    fault_scenario,
    pr_scenario,
    vr_scenario,
)
from exgov.scenarios.simulate import SystemState, Trajectory, initialize_equilibrium, run

__all__ = [
    "CctResult", "ScenarioResult", "Verdict", "cct_search", "fault_scenario", "pr_scenario", "vr_scenario",
    "ReferenceStep", "ScenarioConfig", "SystemState", "Trajectory",
    "builtin_names", "initialize_equilibrium", "load_config", "parse_config", "run",
]
