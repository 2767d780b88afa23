from __future__ import annotations

import math

import numpy as np
import pytest

from exgov.network import Attachment, Branch, Bus, NetworkSpec
from exgov.plant import ActuatorLimits, GeneratorParams, GovernorParams, Kind, MachineSpec
from exgov.scenarios.config import ScenarioConfig, SimSettings, load_config

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def smib_config(x_line=0.4, xdp=0.3, P0=0.6, U0=1.0, kind=Kind.CG, t_end=1.0, dt=1e-3, D=12.0,
                H=4.0) -> ScenarioConfig:
    """One machine behind ``x_line`` against an infinite source (tiny x'_d)."""
    buses = (Bus(1), Bus(2))
    branches = (Branch("1-2", 1, 2, x=x_line),)
    machines = (
        MachineSpec("G1", 1, GeneratorParams(H=H, xd=1.8, xd_prime=xdp, Td0_prime=6.0, D=D),
                    GovernorParams(kind), ActuatorLimits(), U0=U0, P0=P0),
        MachineSpec("INF", 2, GeneratorParams(H=1e6, xd=1e-4, xd_prime=1e-4, Td0_prime=1.0),
                    GovernorParams(Kind.INF), emf=1.0),
    )
    atts = tuple(Attachment(i, m.bus, m.generator.xd_prime) for i, m in enumerate(machines))
    return ScenarioConfig("smib-test", NetworkSpec(buses, branches, atts), machines,
                          sim=SimSettings(t_end=t_end, dt=dt))


def smib_phasors(delta, E=1.0, V=1.0, xdp=0.3, x_line=0.4, x_inf=1e-4):
    """Closed-form terminal voltage magnitude and power of the SMIB."""
    X = xdp + x_line + x_inf
    e = E * complex(math.cos(delta), math.sin(delta))
    i = (e - V) / complex(0.0, X)
    vt = e - complex(0.0, xdp) * i
    return abs(vt), (e * i.conjugate()).real


@pytest.fixture(scope="session")
def four_machine():
    return load_config("four-machine")


@pytest.fixture(scope="session")
def smib():
    return load_config("smib")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
