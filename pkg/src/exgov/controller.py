"""Decentralized Lyapunov-based excitation and governor control.

For every controlled machine the feedback vector ``dy`` collects speed,
voltage and power deviations plus the valve/gate opening deviations. Each
component that has an input channel evolves affinely in that input,
``d(dy_k)/dt = c_k + d_k u_k``; the control law inverts this relation so the
channel follows ``-K dy``:

    u = (-K dy - c) / d

The excitation channel needs the rate of the terminal voltage, which
depends on every machine's EMF rate through the network. The evaluator in
:class:`ClosedLoop` resolves that coupling so that the ``c^E`` each machine
uses is consistent with the excitation actually applied everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from exgov import kernels
from exgov.errors import (
    DegenerateFeedbackError,
    ShapeMismatchError,
    SingularMatrixError,
    UncontrollableVoltageError,
    UndefinedGradientError,
)
from exgov.network import MachineOutputs, ReducedNetwork
from exgov.numerics import solve_linear
from exgov.plant import (
    CONTROL_CHANNELS,
    ActuatorLimits,
    ControlInputs,
    GovernorParams,
    Kind,
    MachineSpec,
    StateLayout,
    system_deriv,
)

__all__ = [
    "ActuatorLimits",
    "ClosedLoop",
    "ControllerConfig",
    "GainBlocks",
    "Snapshot",
    "SurrogateConstants",
    "control_law",
    "excitation_affine",
    "feedback_vector",
    "governor_affine",
    "pe_rate",
    "saturate",
]

PR_FLOOR = 0.05
DE_FLOOR = 1e-6

FEEDBACK_NAMES = {
    Kind.HTG: ("d_omega", "d_Ut", "d_Pe", "d_mu_W"),
    Kind.CG: ("d_omega", "d_Ut", "d_Pe", "d_mu_C"),
    Kind.RG: ("d_omega", "d_Ut", "d_Pe", "d_mu_H", "d_mu_I"),
    Kind.INF: (),
}

# Position in the feedback vector driven by each command channel.
CHANNEL_ROWS = {Kind.HTG: (1, 3), Kind.CG: (1, 3), Kind.RG: (1, 3, 4), Kind.INF: ()}


@dataclass(frozen=True)
class GainBlocks:
    k1: float = -400.0
    k2: float = 30.0
    k3: float = 5.0
    k4: float = 5.0
    k5: float = 5.0

    def scaled(self, s: float) -> "GainBlocks":
        return GainBlocks(*(s * k for k in (self.k1, self.k2, self.k3, self.k4, self.k5)))


@dataclass(frozen=True)
class SurrogateConstants:
    a1: float = -300.0
    a2: float = -300.0
    a3: float = -10.0
    a4: float = 10.0

    def scaled(self, s: float) -> "SurrogateConstants":
        return SurrogateConstants(s * self.a1, s * self.a2, s * self.a3, s * self.a4)


@dataclass(frozen=True)
class ControllerConfig:
    """Per-machine surrogate constants and gains, keyed by machine name.

    Machines without an entry use ``default_constants`` / ``default_gains``.
    """

    default_constants: SurrogateConstants = field(default_factory=SurrogateConstants)
    default_gains: GainBlocks = field(default_factory=GainBlocks)
    constants: dict = field(default_factory=dict)
    gains: dict = field(default_factory=dict)
    pr_floor: float = PR_FLOOR
    de_floor: float = DE_FLOOR

    def constants_for(self, name: str) -> SurrogateConstants:
        return self.constants.get(name, self.default_constants)

    def gains_for(self, name: str) -> GainBlocks:
        return self.gains.get(name, self.default_gains)


def feedback_vector(kind, omega, Ut, Pe, gov: dict, U0, P0, pr_floor=PR_FLOOR) -> np.ndarray:
    """Deviation vector of one machine, ordered as ``FEEDBACK_NAMES[kind]``."""
    kind = Kind(kind)
    head = [omega - 1.0, Ut - U0, Pe - P0]
    if kind is Kind.HTG:
        return np.array(head + [gov["mu_W"] - Pe])
    if kind is Kind.CG:
        return np.array(head + [gov["mu_C"] - Pe])
    if kind is Kind.RG:
        p_r = gov["P_R"]
        if abs(p_r) < pr_floor:
            raise DegenerateFeedbackError(f"reheater power {p_r:.3g} below floor {pr_floor}")
        return np.array(head + [gov["mu_H"] - Pe, gov["mu_I"] - Pe / p_r])
    raise ValueError("uncontrolled machines have no feedback vector")


def pe_rate(dPe_ddelta, dPe_deq, delta_dot, eq_dot) -> np.ndarray:
    """Chain rule for the electrical power rate of every machine."""
    return np.asarray(dPe_ddelta) @ np.asarray(delta_dot) + np.asarray(dPe_deq) @ np.asarray(eq_dot)


def excitation_affine(dUt_ddelta, dUt_deq, delta_dot, eq_dot_open, ef, Td0, controlled,
                      floor=DE_FLOOR):
    """Affine split of the terminal-voltage rate, ``dU_t/dt = c^E + d^E E_f``.

    ``eq_dot_open`` is every machine's EMF rate with zero excitation
    (zero for fixed-EMF machines); ``ef`` the excitation currently applied.
    Machine ``i``'s own excitation enters only through ``d^E_i``.
    """
    controlled = np.asarray(controlled, dtype=bool)
    JUe = np.asarray(dUt_deq)
    push = np.where(controlled, np.asarray(ef) / np.asarray(Td0), 0.0)
    d = np.diag(JUe) / np.asarray(Td0)
    c = (np.asarray(dUt_ddelta) @ np.asarray(delta_dot) + JUe @ np.asarray(eq_dot_open)
         + JUe @ push - np.diag(JUe) * push)
    weak = controlled & (np.abs(d) < floor)
    if np.any(weak):
        bad = int(np.flatnonzero(weak)[0])
        raise UncontrollableVoltageError(f"machine {bad}: |d^E| = {abs(d[bad]):.3g} below {floor}")
    return c, d


def governor_affine(kind, gov: dict, gp: GovernorParams, pe_dot, pe, pr_floor=PR_FLOOR):
    """``(c, d)`` tuples for the governor channels of one machine."""
    kind = Kind(kind)
    if kind is Kind.HTG:
        return (-gov["mu_W"] / gp.T_Ws - pe_dot,), (1.0 / gp.T_Ws,)
    if kind is Kind.CG:
        return (-gov["mu_C"] / gp.T_Cs - pe_dot,), (1.0 / gp.T_Cs,)
    if kind is Kind.RG:
        p_r = gov["P_R"]
        if abs(p_r) < pr_floor:
            raise DegenerateFeedbackError(f"reheater power {p_r:.3g} below floor {pr_floor}")
        pr_dot = (gov["P_H"] / gp.C_H - p_r) / gp.T_R
        ratio_dot = (pe_dot * p_r - pe * pr_dot) / (p_r * p_r)
        c = (-gov["mu_H"] / gp.T_HS - pe_dot, -gov["mu_I"] / gp.T_IS - ratio_dot)
        return c, (1.0 / gp.T_HS, 1.0 / gp.T_IS)
    raise ValueError("uncontrolled machines have no governor channel")


def control_law(kind, fb, c, d, gains: GainBlocks, floor=DE_FLOOR) -> tuple:
    """Unsaturated commands of one machine, in ``CONTROL_CHANNELS`` order.

    ``c`` and ``d`` hold the excitation term first, then the governor terms.
    """
    kind = Kind(kind)
    if len(fb) != len(FEEDBACK_NAMES[kind]) or len(c) != len(d) or len(c) != len(CONTROL_CHANNELS[kind]):
        raise ShapeMismatchError(f"feedback/affine sizes do not match a {kind.value} machine")
    if any(abs(dk) < floor for dk in d):
        raise UncontrollableVoltageError("affine input coefficient below floor")
    k = gains
    ef = (-k.k1 * fb[0] - k.k2 * fb[1] - c[0]) / d[0]
    valve = (-k.k3 * fb[2] - k.k4 * fb[3] - c[1]) / d[1]
    if kind is Kind.RG:
        ip = (-k.k5 * fb[4] - c[2]) / d[2]
        return ef, valve, ip
    return ef, valve


def saturate(kind, u: Sequence[float], limits: ActuatorLimits) -> tuple:
    bounds = limits.for_kind(kind)
    return tuple(min(max(v, lo), hi) for v, (lo, hi) in zip(u, bounds))


@dataclass
class Snapshot:
    """Everything the closed loop computed at one state."""

    Pe: np.ndarray
    Ut: np.ndarray
    pe_dot: np.ndarray
    y: np.ndarray          # concatenated feedback of all controlled machines
    ydot: np.ndarray       # its exact rate at this state
    c: np.ndarray          # affine offsets per command channel
    d: np.ndarray          # affine gains per command channel
    u_raw: np.ndarray      # control-law output per channel
    u_sat: np.ndarray      # after actuator limits
    inputs: ControlInputs
    clipped: np.ndarray    # per channel: raw command outside its limits

    @property
    def saturated(self) -> bool:
        return bool(np.any(self.clipped))


class ClosedLoop:
    """State-feedback closed loop on a fixed reduced network."""

    def __init__(self, machines: Sequence[MachineSpec], net: ReducedNetwork,
                 config: ControllerConfig | None = None):
        self.machines = tuple(machines)
        self.layout = StateLayout(self.machines)
        self.config = config or ControllerConfig()
        self.set_network(net)
        gens = [m.generator for m in self.machines]
        self.xdp = np.array([g.xd_prime for g in gens])
        self.xd_gap = np.array([g.xd - g.xd_prime for g in gens])
        self.Td0 = np.array([g.Td0_prime for g in gens])
        self.omega_s = np.array([g.omega_s for g in gens])
        self.controlled = np.array([m.controlled for m in self.machines])
        self.ctrl = np.flatnonzero(self.controlled)
        gains = [self.config.gains_for(m.name) for m in self.machines]
        self.gains = gains
        self.k1 = np.array([g.k1 for g in gains])
        self.k2 = np.array([g.k2 for g in gains])
        lim = [m.limits.ef for m in self.machines]
        self.ef_lo = np.array([b[0] for b in lim])
        self.ef_hi = np.array([b[1] for b in lim])
        # fixed mechanical power of INF machines, set by initialization
        self.pm_fixed = np.zeros(len(self.machines))
        self.ef_guess = np.zeros(len(self.machines))

        ysl, usl = [], []
        ny = nu = 0
        for m in self.machines:
            ky = len(FEEDBACK_NAMES[m.kind])
            ku = len(CONTROL_CHANNELS[m.kind])
            ysl.append(slice(ny, ny + ky))
            usl.append(slice(nu, nu + ku))
            ny += ky
            nu += ku
        self.y_slices = ysl
        self.u_slices = usl
        self.ny = ny
        self.nu = nu
        self.kinds = [m.kind for m in self.machines if m.controlled]

    def set_network(self, net: ReducedNetwork) -> None:
        if net.n != len(self.machines):
            raise ShapeMismatchError(f"network has {net.n} machines, expected {len(self.machines)}")
        self.net = net
        self.G = np.ascontiguousarray(net.G)
        self.B = np.ascontiguousarray(net.B)

    def feedback_labels(self) -> list[str]:
        out = []
        for m in self.machines:
            out.extend(f"{m.name}.{s}" for s in FEEDBACK_NAMES[m.kind])
        return out

    def channel_labels(self) -> list[str]:
        out = []
        for m in self.machines:
            out.extend(f"{m.name}.{s}" for s in CONTROL_CHANNELS[m.kind])
        return out

    def _resolve_excitation(self, v, base, JUe):
        """Excitation of all controlled machines, each obeying its own law.

        Machine i applies ``E_i = sat((v_i - c_i(E_others)) / d_i)``. Without
        saturation this is one linear solve; otherwise projected Gauss-Seidel
        sweeps from the clipped solution.
        """
        idx = self.ctrl
        M = JUe[np.ix_(idx, idx)] / self.Td0[idx][None, :]
        rhs = v[idx] - base[idx]
        lo, hi = self.ef_lo[idx], self.ef_hi[idx]
        try:
            e = solve_linear(M, rhs)
        except SingularMatrixError:
            e = np.clip(self.ef_guess[idx], lo, hi)
        if np.any(e < lo) or np.any(e > hi):
            e = np.clip(e, lo, hi)
            diag = np.diag(M)
            for _ in range(200):
                change = 0.0
                for k in range(len(idx)):
                    raw = (rhs[k] - M[k] @ e + diag[k] * e[k]) / diag[k]
                    new = min(max(raw, lo[k]), hi[k])
                    change = max(change, abs(new - e[k]))
                    e[k] = new
                if change <= 1e-14:
                    break
        ef = np.zeros(len(self.machines))
        ef[idx] = e
        return ef

    def evaluate(self, x, U0, P0, record=False):
        """Rate of the closed-loop state; optionally the full :class:`Snapshot`."""
        L = self.layout
        delta = x[L.i_delta]
        omega = x[L.i_omega]
        eq = x[L.i_eq]
        Pe, Ut, Id, Iq, JPd, JPe, JUd, JUe = kernels.network_terms(
            self.G, self.B, delta, eq, self.xdp, True)
        ctrl = self.ctrl
        if np.any(Ut[ctrl] <= 1e-12):
            raise UndefinedGradientError("terminal voltage collapsed to zero")
        ddelta = self.omega_s * (omega - 1.0)
        q_open = np.where(self.controlled, (-eq - self.xd_gap * Id) / self.Td0, 0.0)
        v = -self.k1 * (omega - 1.0) - self.k2 * (Ut - U0)
        base = JUd @ ddelta + JUe @ q_open
        ef = self._resolve_excitation(v, base, JUe)
        self.ef_guess = ef
        cE, dE = excitation_affine(JUd, JUe, ddelta, q_open, ef, self.Td0, self.controlled,
                                   self.config.de_floor)
        eq_dot = q_open + np.where(self.controlled, ef / self.Td0, 0.0)
        pe_dot = JPd @ ddelta + JPe @ eq_dot

        n = len(self.machines)
        u = ControlInputs(ef, np.zeros(n), np.zeros(n))
        if record:
            y = np.empty(self.ny)
            ydot = np.empty(self.ny)
            c_all = np.empty(self.nu)
            d_all = np.empty(self.nu)
            raw_all = np.empty(self.nu)
            sat_all = np.empty(self.nu)
            clip_all = np.zeros(self.nu, dtype=bool)
        for i, m in enumerate(self.machines):
            if not m.controlled:
                u.valve[i] = self.pm_fixed[i]
                continue
            gov = L.governor_states(x, i)
            gc, gd = governor_affine(m.kind, gov, m.governor, pe_dot[i], Pe[i], self.config.pr_floor)
            fb = feedback_vector(m.kind, omega[i], Ut[i], Pe[i], gov, U0[i], P0[i],
                                 self.config.pr_floor)
            c = (cE[i],) + gc
            d = (dE[i],) + gd
            raw = control_law(m.kind, fb, c, d, self.gains[i], self.config.de_floor)
            sat = saturate(m.kind, raw, m.limits)
            u.valve[i] = sat[1]
            if m.kind is Kind.RG:
                u.ip_valve[i] = sat[2]
            if record:
                ys, us = self.y_slices[i], self.u_slices[i]
                y[ys] = fb
                c_all[us] = c
                d_all[us] = d
                raw_all[us] = raw
                sat_all[us] = (ef[i],) + sat[1:]
                clip_all[us] = [a != b for a, b in zip(raw, sat)]
        outputs = MachineOutputs(Pe, Ut, Id, Iq)
        dx = system_deriv(x, u, self.net, self.machines, L, outputs)
        if not record:
            return dx, None
        for i, m in enumerate(self.machines):
            if not m.controlled:
                continue
            ys, us = self.y_slices[i], self.u_slices[i]
            rows = ydot[ys]
            rows[0] = dx[L.i_omega[i]]
            rows[2] = pe_dot[i]
            for ch, row in enumerate(CHANNEL_ROWS[m.kind]):
                rows[row] = c_all[us][ch] + d_all[us][ch] * sat_all[us][ch]
            ydot[ys] = rows
        snap = Snapshot(Pe=Pe, Ut=Ut, pe_dot=pe_dot, y=y, ydot=ydot, c=c_all, d=d_all,
                        u_raw=raw_all, u_sat=sat_all, inputs=u, clipped=clip_all)
        return dx, snap
