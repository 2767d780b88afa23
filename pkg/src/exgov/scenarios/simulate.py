"""Steady-state initialization and the fixed-step closed-loop time loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from exgov import kernels
from exgov.certify import build_surrogate, gas_certificate
from exgov.controller import ClosedLoop
from exgov.errors import ExgovError, InfeasibleOperatingPointError, SimulationDiverged
from exgov.network import NetworkSpec, apply_event, reduce_network
from exgov.numerics import rk4_step
from exgov.plant import Kind, StateLayout
from exgov.scenarios.config import ScenarioConfig

log = logging.getLogger(__name__)

INIT_MAX_ITER = 200
INIT_RESIDUAL = 1e-12
INIT_RATE_TOL = 1e-9


@dataclass
class SystemState:
    """A steady operating point and the quantities it was solved from."""

    x: np.ndarray
    ef: np.ndarray
    Pe: np.ndarray
    Ut: np.ndarray
    pm_fixed: np.ndarray
    U0: np.ndarray
    P0: np.ndarray
    iterations: int
    max_rate: float


def _governor_fixed_point(kind: Kind, pe: float, gov) -> list[float]:
    if kind in (Kind.HTG, Kind.CG):
        return [pe, pe]
    if kind is Kind.RG:
        # mu_I = 1 keeps the IP valve fully open at rest; then mu_H = P_M
        return [gov.C_H * pe, pe, pe, gov.C_I * pe, 1.0, gov.C_L * pe]
    return []


def _check_limits(cfg: ScenarioConfig, ef: np.ndarray, Pe: np.ndarray) -> None:
    for i, m in enumerate(cfg.machines):
        if not m.controlled:
            continue
        lo, hi = m.limits.ef
        if not lo <= ef[i] <= hi:
            raise InfeasibleOperatingPointError(
                f"{m.name}: steady excitation {ef[i]:.4f} outside [{lo}, {hi}]")
        vlo, vhi = m.limits.for_kind(m.kind)[1]
        if not vlo <= Pe[i] <= vhi:
            raise InfeasibleOperatingPointError(
                f"{m.name}: steady valve opening {Pe[i]:.4f} outside [{vlo}, {vhi}]")


def initialize_equilibrium(cfg: ScenarioConfig, network: NetworkSpec | None = None,
                           U0=None, P0=None) -> SystemState:
    """Solve for the steady state that meets every machine's ``(U0, P0)``.

    Unknowns are the rotor angle and transient EMF of each controlled
    machine; infinite-bus machines sit at ``delta = 0`` with their fixed EMF.
    Without any infinite bus the first machine is the angle reference and
    the residual is minimized in the least-squares sense. The step is a
    Levenberg-Marquardt damped Newton step on the analytic Jacobian.
    """
    net = reduce_network(network or cfg.network)
    machines = cfg.machines
    n = len(machines)
    U0 = np.array([m.U0 for m in machines] if U0 is None else U0, dtype=float)
    P0 = np.array([m.P0 for m in machines] if P0 is None else P0, dtype=float)
    ctrl = np.array([i for i, m in enumerate(machines) if m.controlled], dtype=int)
    inf = [i for i, m in enumerate(machines) if not m.controlled]
    xdp = np.array([m.generator.xd_prime for m in machines])

    delta = np.zeros(n)
    eq = np.array([m.emf if not m.controlled else m.U0 for m in machines], dtype=float)
    ang = ctrl if inf else ctrl[1:]

    def residual(delta, eq):
        Pe, Ut, Id, Iq, JPd, JPe, JUd, JUe = kernels.network_terms(net.G, net.B, delta, eq, xdp, True)
        r = np.concatenate([Pe[ctrl] - P0[ctrl], Ut[ctrl] - U0[ctrl]])
        J = np.block([
            [JPd[np.ix_(ctrl, ang)], JPe[np.ix_(ctrl, ctrl)]],
            [JUd[np.ix_(ctrl, ang)], JUe[np.ix_(ctrl, ctrl)]],
        ])
        return r, J

    lam = 1e-3
    it = 0
    r, J = residual(delta, eq)
    cost = float(r @ r)
    while cost > INIT_RESIDUAL ** 2 and it < INIT_MAX_ITER:
        it += 1
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(30):
            step = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ) + 1e-12), -g)
            d_new = delta.copy()
            e_new = eq.copy()
            d_new[ang] += step[:len(ang)]
            e_new[ctrl] += step[len(ang):]
            if np.all(e_new[ctrl] > 0):
                r_new, J_new = residual(d_new, e_new)
                c_new = float(r_new @ r_new)
                if c_new < cost:
                    delta, eq, r, J, cost = d_new, e_new, r_new, J_new, c_new
                    lam = max(lam / 10.0, 1e-12)
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            break
    if cost > INIT_RESIDUAL ** 2:
        worst = float(np.sqrt(cost))
        raise InfeasibleOperatingPointError(
            f"no operating point meets the references (residual {worst:.3e} after {it} iterations)")

    Pe, Ut, Id, Iq, *_ = kernels.network_terms(net.G, net.B, delta, eq, xdp, False)
    gap = np.array([m.generator.xd - m.generator.xd_prime for m in machines])
    ef = np.where([m.controlled for m in machines], eq + gap * Id, 0.0)
    _check_limits(cfg, ef, Pe)

    layout = StateLayout(machines)
    x = np.zeros(layout.size)
    x[layout.i_delta] = delta
    x[layout.i_omega] = 1.0
    x[layout.i_eq] = eq
    for i, m in enumerate(machines):
        x[layout.governor_slice(i)] = _governor_fixed_point(m.kind, Pe[i], m.governor)
    pm_fixed = np.zeros(n)
    pm_fixed[inf] = Pe[inf]

    loop = ClosedLoop(machines, net, cfg.controller)
    loop.pm_fixed = pm_fixed
    U0_eff = U0.copy()
    P0_eff = P0.copy()
    U0_eff[inf] = Ut[inf]
    P0_eff[inf] = Pe[inf]
    dx, _ = loop.evaluate(x, U0_eff, P0_eff)
    rate = float(np.max(np.abs(dx)))
    if rate > INIT_RATE_TOL:
        raise InfeasibleOperatingPointError(f"operating point not stationary (max rate {rate:.3e})")
    return SystemState(x=x, ef=ef, Pe=Pe, Ut=Ut, pm_fixed=pm_fixed, U0=U0_eff, P0=P0_eff,
                       iterations=it, max_rate=rate)


@dataclass
class Trajectory:
    """Uniformly sampled closed-loop history; row ``k`` is time ``t[k]``."""

    t: np.ndarray
    x: np.ndarray
    Ut: np.ndarray
    Pe: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    c: np.ndarray
    d: np.ndarray
    u_raw: np.ndarray
    u_sat: np.ndarray
    V: np.ndarray
    Vdot_exact: np.ndarray
    saturated: np.ndarray   # any channel clipped at this sample
    clipped: np.ndarray     # per channel
    U0: np.ndarray
    P0: np.ndarray
    machine_names: tuple
    state_labels: list
    feedback_labels: list
    channel_labels: list
    dt: float
    event_times: list = field(default_factory=list)
    complete: bool = True

    def __len__(self) -> int:
        return len(self.t)

    def series(self, label: str) -> np.ndarray:
        """Column by label, e.g. ``"G2.omega"``, ``"G2.Ut"`` or ``"G2.u_sat.ef"``."""
        if label in self.state_labels:
            return self.x[:, self.state_labels.index(label)]
        name, _, rest = label.partition(".")
        i = self.machine_names.index(name)
        if rest in ("Ut", "Pe", "U0", "P0"):
            return getattr(self, rest)[:, i]
        if rest.startswith("y."):
            return self.y[:, self.feedback_labels.index(f"{name}.{rest[2:]}")]
        for arr in ("u_raw", "u_sat", "c", "d"):
            if rest.startswith(arr + "."):
                return getattr(self, arr)[:, self.channel_labels.index(f"{name}.{rest[len(arr) + 1:]}")]
        raise KeyError(label)

    def omega(self) -> np.ndarray:
        return self.x[:, [k for k, s in enumerate(self.state_labels) if s.endswith(".omega")]]

    def delta(self) -> np.ndarray:
        return self.x[:, [k for k, s in enumerate(self.state_labels) if s.endswith(".delta")]]

    def angle_spread(self) -> np.ndarray:
        d = self.delta()
        return d.max(axis=1) - d.min(axis=1)


class _Recorder:
    def __init__(self, loop: ClosedLoop, size: int):
        self.loop = loop
        self.rows = {k: [] for k in ("t", "x", "Ut", "Pe", "y", "ydot", "c", "d", "u_raw", "u_sat",
                                     "saturated", "clipped", "U0", "P0")}

    def add(self, t, x, snap, U0, P0):
        r = self.rows
        r["t"].append(t)
        r["x"].append(x.copy())
        r["Ut"].append(snap.Ut.copy())
        r["Pe"].append(snap.Pe.copy())
        r["y"].append(snap.y.copy())
        r["ydot"].append(snap.ydot.copy())
        r["c"].append(snap.c.copy())
        r["d"].append(snap.d.copy())
        r["u_raw"].append(snap.u_raw.copy())
        r["u_sat"].append(snap.u_sat.copy())
        r["saturated"].append(snap.saturated)
        r["clipped"].append(snap.clipped.copy())
        r["U0"].append(U0.copy())
        r["P0"].append(P0.copy())

    def build(self, cfg, dt, events, complete=True) -> Trajectory:
        r = self.rows
        loop = self.loop
        arr = {k: np.array(v, dtype=bool if k in ("saturated", "clipped") else float) for k, v in r.items()}
        if not r["t"]:
            for k in arr:
                arr[k] = arr[k].reshape(0, 0) if k not in ("t", "saturated") else arr[k]
        y = arr["y"]
        V = 0.5 * np.einsum("ij,ij->i", y, y) if y.size else np.zeros(len(r["t"]))
        Vdot = np.einsum("ij,ij->i", y, arr["ydot"]) if y.size else np.zeros(len(r["t"]))
        return Trajectory(
            V=V, Vdot_exact=Vdot, machine_names=tuple(m.name for m in cfg.machines),
            state_labels=list(loop.layout.labels), feedback_labels=loop.feedback_labels(),
            channel_labels=loop.channel_labels(), dt=dt, event_times=events, complete=complete,
            **arr,
        )


def certificate_for(cfg: ScenarioConfig):
    ctrl = [m for m in cfg.machines if m.controlled]
    sys = build_surrogate([m.kind for m in ctrl], [cfg.controller.constants_for(m.name) for m in ctrl])
    return gas_certificate(sys, [cfg.controller.gains_for(m.name) for m in ctrl])


def run(cfg: ScenarioConfig, initial: SystemState | None = None, check_certificate: bool = True
        ) -> Trajectory:
    """Integrate the closed loop from the steady state through every event.

    Network events and reference steps scheduled at ``t`` take effect at
    step index ``round(t / dt)``, before that sample is recorded. Any
    numerical failure or a speed deviation beyond ``verdict.abort_speed``
    raises :class:`SimulationDiverged` carrying the partial trajectory.
    """
    if check_certificate:
        cert = certificate_for(cfg)
        if not cert.certified:
            log.warning("controller gains are not certified (margin %.4g)", cert.margin)
    state = initial or initialize_equilibrium(cfg)
    dt = cfg.sim.dt
    n_steps = int(round(cfg.sim.t_end / dt))
    spec = cfg.network
    loop = ClosedLoop(cfg.machines, reduce_network(spec), cfg.controller)
    loop.pm_fixed = state.pm_fixed.copy()
    loop.ef_guess = state.ef.copy()
    U0 = state.U0.copy()
    P0 = state.P0.copy()

    net_sched: dict[int, list] = {}
    for ev in sorted(cfg.events, key=lambda e: e.time):
        net_sched.setdefault(int(round(ev.time / dt)), []).append(ev)
    ref_sched: dict[int, list] = {}
    for st in sorted(cfg.steps, key=lambda s: s.time):
        ref_sched.setdefault(int(round(st.time / dt)), []).append(st)
    event_times = sorted({k * dt for k in net_sched} | {k * dt for k in ref_sched})

    rec = _Recorder(loop, n_steps + 1)
    x = state.x.copy()
    iw = loop.layout.i_omega
    abort = cfg.verdict.abort_speed

    def rhs(_t, z):
        return loop.evaluate(z, U0, P0)[0]

    t = 0.0
    for k in range(n_steps + 1):
        t = k * dt
        try:
            if k in net_sched:
                for ev in net_sched[k]:
                    spec = apply_event(spec, ev)
                loop.set_network(reduce_network(spec))
            if k in ref_sched:
                for st in ref_sched[k]:
                    i = cfg.machine_index(st.machine)
                    if st.U0 is not None:
                        U0[i] = st.U0
                    if st.P0 is not None:
                        P0[i] = st.P0
            dx, snap = loop.evaluate(x, U0, P0, record=True)
            rec.add(t, x, snap, U0, P0)
            dev = float(np.max(np.abs(x[iw] - 1.0)))
            if dev > abort:
                raise SimulationDiverged(t, f"speed deviation {dev:.3f} p.u. exceeds {abort}",
                                         rec.build(cfg, dt, event_times, complete=False))
            if k == n_steps:
                break
            x = rk4_step(rhs, t, x, dt, k1=dx)
        except SimulationDiverged:
            raise
        except (ExgovError, ArithmeticError, FloatingPointError) as exc:
            raise SimulationDiverged(t, str(exc), rec.build(cfg, dt, event_times, complete=False)) from exc
    return rec.build(cfg, dt, event_times)
