"""Continuous-time machine models.

Each machine is a third-order generator (rotor angle, per-unit speed,
transient EMF) driven by one governor subsystem:

* ``HTG`` hydraulic turbine with water hammer (no water-column elasticity),
* ``CG``  condensing steam turbine,
* ``RG``  reheat steam turbine with HP/IP/LP cylinders and a re-heater,
* ``INF`` an uncontrolled machine with fixed EMF and constant mechanical
  power, used with a huge inertia to stand in for an infinite bus.

Speed is stored in per unit, so ``omega - 1`` is the speed deviation and
``d delta/dt = omega_s (omega - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from exgov.errors import ExgovError
from exgov.network import MachineOutputs, ReducedNetwork, machine_outputs


class Kind(str, Enum):
    HTG = "HTG"
    CG = "CG"
    RG = "RG"
    INF = "INF"


GOVERNOR_STATES = {
    Kind.HTG: ("P_M", "mu_W"),
    Kind.CG: ("P_M", "mu_C"),
    Kind.RG: ("P_H", "mu_H", "P_R", "P_I", "mu_I", "P_L"),
    Kind.INF: (),
}

# Command channels per kind, in feedback order (excitation first).
CONTROL_CHANNELS = {
    Kind.HTG: ("E_f", "U_W"),
    Kind.CG: ("E_f", "U_C"),
    Kind.RG: ("E_f", "U_H", "U_I"),
    Kind.INF: (),
}


@dataclass(frozen=True)
class GeneratorParams:
    H: float
    xd: float
    xd_prime: float
    Td0_prime: float
    D: float = 0.0
    omega_s: float = 2.0 * math.pi * 50.0

    def __post_init__(self):
        if not self.H > 0:
            raise ValueError("H must be positive")
        if not self.Td0_prime > 0:
            raise ValueError("T'_d0 must be positive")
        if not (self.xd >= self.xd_prime > 0):
            raise ValueError("need x_d >= x'_d > 0")
        if not self.omega_s > 0:
            raise ValueError("omega_s must be positive")


@dataclass(frozen=True)
class GovernorParams:
    kind: Kind
    T_W: float = 1.0
    T_Ws: float = 5.0
    T_C: float = 0.2
    T_Cs: float = 0.2
    T_H: float = 0.2
    T_HS: float = 0.2
    T_R: float = 10.0
    T_I: float = 0.1
    T_IS: float = 0.2
    T_L: float = 0.1
    C_H: float = 0.3
    C_I: float = 0.4
    C_L: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        for name in ("T_W", "T_Ws", "T_C", "T_Cs", "T_H", "T_HS", "T_R", "T_I", "T_IS", "T_L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kind is Kind.RG:
            if min(self.C_H, self.C_I, self.C_L) <= 0:
                raise ValueError("cylinder coefficients must be positive")
            if abs(self.C_H + self.C_I + self.C_L - 1.0) > 1e-9:
                raise ValueError("C_H + C_I + C_L must equal 1")


@dataclass(frozen=True)
class ActuatorLimits:
    ef: tuple[float, float] = (-5.0, 5.0)
    mu_W: tuple[float, float] = (0.0, 6.0)
    mu_C: tuple[float, float] = (0.0, 0.8)
    mu_H: tuple[float, float] = (0.0, 7.0)
    mu_I: tuple[float, float] = (0.0, 1.1)

    def __post_init__(self):
        for name in ("ef", "mu_W", "mu_C", "mu_H", "mu_I"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"limit {name} needs min < max")

    def for_kind(self, kind: Kind) -> tuple[tuple[float, float], ...]:
        """Bounds per command channel, aligned with ``CONTROL_CHANNELS``."""
        kind = Kind(kind)
        if kind is Kind.HTG:
            return (self.ef, self.mu_W)
        if kind is Kind.CG:
            return (self.ef, self.mu_C)
        if kind is Kind.RG:
            return (self.ef, self.mu_H, self.mu_I)
        return ()


@dataclass(frozen=True)
class MachineSpec:
    name: str
    bus: int
    generator: GeneratorParams
    governor: GovernorParams
    limits: ActuatorLimits = field(default_factory=ActuatorLimits)
    U0: float = 1.0
    P0: float = 0.0
    emf: float = 1.0  # held E'_q of INF machines


    @property
    def kind(self) -> Kind:
        return self.governor.kind

    @property
    def controlled(self) -> bool:
        return self.kind is not Kind.INF


@dataclass
class ControlInputs:
    """Commands for every machine.

    ``ef[i]`` is the excitation voltage; ``valve[i]`` is U_W, U_C or U_H by
    kind (for ``INF`` machines it carries the constant mechanical power);
    ``ip_valve[i]`` is U_I for reheat machines and unused otherwise.
    """

    ef: np.ndarray
    valve: np.ndarray
    ip_valve: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ControlInputs":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> "ControlInputs":
        return ControlInputs(self.ef.copy(), self.valve.copy(), self.ip_valve.copy())


class StateLayout:
    """Offsets of each machine's states in the flat system vector."""

    def __init__(self, machines):
        self.machines = tuple(machines)
        self.offsets = []
        self.labels = []
        pos = 0
        for spec in self.machines:
            self.offsets.append(pos)
            names = ("delta", "omega", "eq") + GOVERNOR_STATES[spec.kind]
            self.labels.extend(f"{spec.name}.{s}" for s in names)
            pos += len(names)
        self.size = pos
        self.n = len(self.machines)
        off = np.array(self.offsets, dtype=int)
        self.i_delta = off
        self.i_omega = off + 1
        self.i_eq = off + 2

    def governor_slice(self, i: int) -> slice:
        start = self.offsets[i] + 3
        return slice(start, start + len(GOVERNOR_STATES[self.machines[i].kind]))

    def governor_states(self, x: np.ndarray, i: int) -> dict[str, float]:
        names = GOVERNOR_STATES[self.machines[i].kind]
        vals = x[self.governor_slice(i)]
        return {k: float(v) for k, v in zip(names, vals)}

    def mechanical_power(self, x: np.ndarray, u: ControlInputs, i: int) -> float:
        kind = self.machines[i].kind
        g = self.offsets[i] + 3
        if kind is Kind.RG:
            return float(x[g] + x[g + 3] + x[g + 5])
        if kind is Kind.INF:
            return float(u.valve[i])
        return float(x[g])


def generator_deriv(omega, eq, gp: GeneratorParams, ef, pm, pe, i_d, fixed_emf=False):
    """Rates of (delta, omega, E'_q) for the classical third-order model."""
    d_delta = gp.omega_s * (omega - 1.0)
    d_omega = (pm - pe - gp.D * (omega - 1.0)) / (2.0 * gp.H)
    d_eq = 0.0 if fixed_emf else (ef - eq - (gp.xd - gp.xd_prime) * i_d) / gp.Td0_prime
    return d_delta, d_omega, d_eq


def htg_deriv(pm, mu_w, u_w, gp: GovernorParams):
    d_mu = (-mu_w + u_w) / gp.T_Ws
    d_pm = (2.0 / gp.T_W) * (-pm + mu_w - gp.T_W * d_mu)
    return d_pm, d_mu


def cg_deriv(pm, mu_c, u_c, gp: GovernorParams):
    return (-pm + mu_c) / gp.T_C, (-mu_c + u_c) / gp.T_Cs


def rg_deriv(states, u_h, u_i, gp: GovernorParams):
    """Rates of (P_H, mu_H, P_R, P_I, mu_I, P_L) and the summed P_M.

    The LP stage is driven by ``(C_L / C_I) P_I`` so that the cylinder
    split ``P_H : P_I : P_L = C_H : C_I : C_L`` holds in steady state.
    """
    p_h, mu_h, p_r, p_i, mu_i, p_l = states
    d_ph = (gp.C_H * mu_h - p_h) / gp.T_H
    d_muh = (u_h - mu_h) / gp.T_HS
    d_pr = (p_h / gp.C_H - p_r) / gp.T_R
    d_pi = (gp.C_I * p_r * mu_i - p_i) / gp.T_I
    d_mui = (u_i - mu_i) / gp.T_IS
    d_pl = ((gp.C_L / gp.C_I) * p_i - p_l) / gp.T_L
    return (d_ph, d_muh, d_pr, d_pi, d_mui, d_pl), p_h + p_i + p_l


def system_deriv(x, u: ControlInputs, net: ReducedNetwork, machines, layout=None,
                 outputs: MachineOutputs | None = None) -> np.ndarray:
    """Open-loop rate of the full state vector for the given commands."""
    layout = layout or StateLayout(machines)
    if x.shape != (layout.size,):
        raise ValueError(f"state has shape {x.shape}, layout expects ({layout.size},)")
    if outputs is None:
        xdp = np.array([m.generator.xd_prime for m in layout.machines])
        outputs = machine_outputs(net, x[layout.i_delta], x[layout.i_eq], xdp)
    dx = np.zeros_like(x)
    for i, spec in enumerate(layout.machines):
        try:
            _machine_deriv(x, dx, u, i, spec, layout, outputs)
        except ExgovError as exc:
            raise type(exc)(f"machine {i} ({spec.name}): {exc}") from exc
    return dx


def _machine_deriv(x, dx, u, i, spec, layout, outputs):
    o = layout.offsets[i]
    g = o + 3
    kind = spec.kind
    gov = spec.governor
    if kind is Kind.HTG:
        pm = x[g]
        dx[g], dx[g + 1] = htg_deriv(x[g], x[g + 1], u.valve[i], gov)
    elif kind is Kind.CG:
        pm = x[g]
        dx[g], dx[g + 1] = cg_deriv(x[g], x[g + 1], u.valve[i], gov)
    elif kind is Kind.RG:
        rates, pm = rg_deriv(x[g:g + 6], u.valve[i], u.ip_valve[i], gov)
        dx[g:g + 6] = rates
    else:
        pm = u.valve[i]
    dx[o], dx[o + 1], dx[o + 2] = generator_deriv(
        x[o + 1], x[o + 2], spec.generator, u.ef[i], pm,
        outputs.Pe[i], outputs.Id[i], fixed_emf=kind is Kind.INF,
    )
