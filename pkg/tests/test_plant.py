from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import smib_config
from exgov.network import reduce_network
from exgov.plant import (
    ActuatorLimits,
    ControlInputs,
    GeneratorParams,
    GovernorParams,
    Kind,
    StateLayout,
    cg_deriv,
    generator_deriv,
    htg_deriv,
    rg_deriv,
    system_deriv,
)


def test_htg_non_minimum_phase_dip():
    gp = GovernorParams(Kind.HTG)
    d_pm, d_mu = htg_deriv(0.5, 0.5, 0.6, gp)
    assert d_mu == pytest.approx(0.02) and d_pm == pytest.approx(-0.04)


def test_htg_gate_held():
    d_pm, d_mu = htg_deriv(0.0, 0.5, 0.5, GovernorParams(Kind.HTG))
    assert d_mu == 0.0 and d_pm == pytest.approx(1.0)


def test_cg_first_order_lags():
    gp = GovernorParams(Kind.CG, T_C=0.2, T_Cs=0.4)
    assert cg_deriv(0.1, 0.3, 0.7, gp) == pytest.approx(((0.3 - 0.1) / 0.2, (0.7 - 0.3) / 0.4))


def test_rg_stage_rates_and_power_sum():
    gp = GovernorParams(Kind.RG)
    s = (0.3, 1.0, 1.0, 0.4, 1.0, 0.3)  # exact steady state for u_H = u_I = 1
    rates, pm = rg_deriv(s, 1.0, 1.0, gp)
    assert np.allclose(rates, 0.0, atol=1e-15) and pm == pytest.approx(1.0)
    rates, _ = rg_deriv((0.0, 0.0, 0.0, 0.0, 0.0, 0.0), 1.0, 1.0, gp)
    assert rates[1] == pytest.approx(1 / gp.T_HS) and rates[4] == pytest.approx(1 / gp.T_IS)
    assert rates[0] == rates[2] == rates[3] == rates[5] == 0.0


def test_swing_equation_rates():
    gp = GeneratorParams(H=5.0, xd=1.0, xd_prime=0.3, Td0_prime=6.0, D=2.0)
    dd, dw, de = generator_deriv(1.01, 1.1, gp, ef=2.0, pm=1.0, pe=0.8, i_d=0.5)
    assert dd == pytest.approx(2 * math.pi * 50 * 0.01)
    assert dw == pytest.approx((1.0 - 0.8 - 2.0 * 0.01) / 10.0)
    assert de == pytest.approx((2.0 - 1.1 - 0.7 * 0.5) / 6.0)
    assert generator_deriv(1.0, 1.1, gp, 2.0, 1.0, 0.8, 0.5, fixed_emf=True)[2] == 0.0


@pytest.mark.parametrize("bad", [dict(H=0.0), dict(Td0_prime=-1.0), dict(xd=0.1, xd_prime=0.3), dict(omega_s=0.0)])
def test_generator_validation(bad):
    kw = dict(H=5.0, xd=1.0, xd_prime=0.3, Td0_prime=6.0) | bad
    with pytest.raises(ValueError):
        GeneratorParams(**kw)


def test_governor_validation():
    with pytest.raises(ValueError):
        GovernorParams(Kind.RG, C_H=0.5)
    with pytest.raises(ValueError):
        GovernorParams(Kind.HTG, T_W=0.0)
    with pytest.raises(ValueError):
        ActuatorLimits(ef=(1.0, -1.0))
    assert GovernorParams("CG").kind is Kind.CG


def test_state_layout_labels_and_offsets(four_machine):
    L = StateLayout(four_machine.machines)
    assert L.size == 3 + (3 + 6) + (3 + 2) + (3 + 2) + (3 + 6)
    assert L.labels[:3] == ["G1.delta", "G1.omega", "G1.eq"]
    assert L.labels[L.governor_slice(1)] == ["G2.P_H", "G2.mu_H", "G2.P_R", "G2.P_I", "G2.mu_I", "G2.P_L"]
    x = np.arange(L.size, dtype=float)
    assert L.governor_states(x, 2) == {"P_M": 15.0, "mu_W": 16.0}
    u = ControlInputs.zeros(5)
    assert L.mechanical_power(x, u, 1) == x[6] + x[9] + x[11]


def test_system_deriv_zero_at_consistent_state():
    cfg = smib_config()
    net = reduce_network(cfg.network)
    L = StateLayout(cfg.machines)
    from exgov.network import machine_outputs, xd_prime_vector
    delta, eq = np.array([0.5, 0.0]), np.array([1.0, 1.0])
    out = machine_outputs(net, delta, eq, xd_prime_vector(cfg.network))
    x = np.zeros(L.size)
    x[L.i_delta], x[L.i_omega], x[L.i_eq] = delta, 1.0, eq
    x[L.governor_slice(0)] = out.Pe[0]
    u = ControlInputs(np.array([1.0 + 1.5 * out.Id[0], 0.0]), np.array([out.Pe[0], out.Pe[1]]), np.zeros(2))
    assert np.max(np.abs(system_deriv(x, u, net, cfg.machines, L))) < 1e-12


def test_system_deriv_shape_check():
    cfg = smib_config()
    with pytest.raises(ValueError):
        system_deriv(np.zeros(3), ControlInputs.zeros(2), reduce_network(cfg.network), cfg.machines)
