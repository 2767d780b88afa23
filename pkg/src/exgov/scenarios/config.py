"""Scenario configuration: dataclasses plus a strict TOML loader.

Unknown keys anywhere in the file are rejected. The schema version is the
top-level ``schema`` integer; this loader reads version 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from exgov.controller import ControllerConfig, GainBlocks, SurrogateConstants
from exgov.errors import ConfigError
from exgov.network import (
    DEFAULT_FAULT_ADMITTANCE,
    Attachment,
    Branch,
    Bus,
    NetworkEvent,
    NetworkSpec,
)
from exgov.plant import ActuatorLimits, GeneratorParams, GovernorParams, Kind, MachineSpec

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@dataclass(frozen=True)
class ReferenceStep:
    time: float
    machine: str
    U0: float | None = None
    P0: float | None = None


@dataclass(frozen=True)
class SimSettings:
    t_end: float = 10.0
    dt: float = 1e-3


@dataclass(frozen=True)
class OutputSettings:
    csv: str | None = None
    report: str | None = None
    plot_script: bool = False


@dataclass(frozen=True)
class VerdictSettings:
    track_tol: float = 1e-3      # p.u., VR/PR convergence
    omega_tol: float = 1e-4      # p.u., fault stability at t_end
    angle_spread: float = math.pi
    abort_speed: float = 0.2     # |omega - 1| beyond this aborts a run
    vdot_floor: float = 1e-9


@dataclass(frozen=True)
class ExperimentSettings:
    step_time: float = 0.25
    vr_targets: dict = field(default_factory=dict)
    pr_targets: dict = field(default_factory=dict)
    fault_time: float = 0.5
    fault_bus: int | None = None
    fault_line: str | None = None
    clearing: float = 0.15
    cct_lo: float = 0.01
    cct_hi: float = 1.0
    cct_tol: float = 0.005
    cct_t_end: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    network: NetworkSpec
    machines: tuple[MachineSpec, ...]
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    events: tuple[NetworkEvent, ...] = ()
    steps: tuple[ReferenceStep, ...] = ()
    sim: SimSettings = field(default_factory=SimSettings)
    outputs: OutputSettings = field(default_factory=OutputSettings)
    verdict: VerdictSettings = field(default_factory=VerdictSettings)
    experiments: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        if not self.sim.dt > 0:
            raise ConfigError("sim.dt must be positive")
        if not self.sim.t_end > 0:
            raise ConfigError("sim.t_end must be positive")
        names = [m.name for m in self.machines]
        if len(set(names)) != len(names):
            raise ConfigError("machine names must be unique")
        for ev in self.events:
            if ev.time > self.sim.t_end:
                raise ConfigError(f"event at {ev.time} s lies beyond t_end")
        for st in self.steps:
            if st.machine not in names:
                raise ConfigError(f"reference step for unknown machine {st.machine!r}")
            if st.time > self.sim.t_end or st.time < 0:
                raise ConfigError(f"reference step at {st.time} s lies outside [0, t_end]")
            if st.U0 is None and st.P0 is None:
                raise ConfigError("reference step needs U0 and/or P0")
            mach = self.machines[names.index(st.machine)]
            if not mach.controlled:
                raise ConfigError(f"machine {st.machine!r} is not controlled")
            if st.P0 is not None:
                _check_power_feasible(mach, st.P0)

    def machine_index(self, name: str) -> int:
        for i, m in enumerate(self.machines):
            if m.name == name:
                return i
        raise KeyError(name)

    def with_sim(self, t_end=None, dt=None) -> "ScenarioConfig":
        sim = replace(self.sim, **{k: v for k, v in (("t_end", t_end), ("dt", dt)) if v is not None})
        return replace(self, sim=sim)

    def with_changes(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def scaled_inertia(self, factor: float) -> "ScenarioConfig":
        """Copy with every controlled machine's H multiplied by ``factor``."""
        machines = tuple(
            replace(m, generator=replace(m.generator, H=m.generator.H * factor)) if m.controlled else m
            for m in self.machines
        )
        return replace(self, machines=machines)


def _check_power_feasible(m: MachineSpec, p: float) -> None:
    lo, hi = {
        Kind.HTG: m.limits.mu_W,
        Kind.CG: m.limits.mu_C,
        Kind.RG: m.limits.mu_H,
    }[m.kind]
    if not lo <= p <= hi:
        raise ConfigError(f"power reference {p} of {m.name} outside opening range [{lo}, {hi}]")


class _Table:
    """Dict wrapper that records which keys were read, for strict checking."""

    def __init__(self, data: dict, where: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a table")
        self.data = data
        self.where = where
        self.used: set[str] = set()

    def get(self, key: str, default: Any = None, kind: type | tuple | None = None):
        self.used.add(key)
        if key not in self.data:
            return default
        val = self.data[key]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if kind is not None and not isinstance(val, kind):
            raise ConfigError(f"{self.where}.{key}: expected {getattr(kind, '__name__', kind)}")
        return val

    def require(self, key: str, kind=None):
        if key not in self.data:
            raise ConfigError(f"{self.where}: missing required key {key!r}")
        return self.get(key, kind=kind)

    def sub(self, key: str) -> "_Table":
        self.used.add(key)
        return _Table(self.data.get(key, {}), f"{self.where}.{key}" if self.where else key)

    def items(self, key: str) -> list["_Table"]:
        self.used.add(key)
        raw = self.data.get(key, [])
        if not isinstance(raw, list):
            raise ConfigError(f"{self.where}.{key}: expected an array of tables")
        return [_Table(r, f"{self.where}.{key}[{i}]") for i, r in enumerate(raw)]

    def finish(self):
        extra = set(self.data) - self.used
        if extra:
            raise ConfigError(f"{self.where or 'config'}: unknown keys {sorted(extra)}")


def _pair(t: _Table, key: str, default):
    val = t.get(key, default)
    if not (isinstance(val, (list, tuple)) and len(val) == 2):
        raise ConfigError(f"{t.where}.{key}: expected [min, max]")
    return (float(val[0]), float(val[1]))


def _float_map(t: _Table, key: str) -> dict:
    raw = t.get(key, {}, kind=dict)
    try:
        return {str(k): float(v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{t.where}.{key}: values must be numbers") from exc


_GOV_FIELDS = ("T_W", "T_Ws", "T_C", "T_Cs", "T_H", "T_HS", "T_R", "T_I", "T_IS", "T_L", "C_H", "C_I", "C_L")


def _machine(t: _Table) -> MachineSpec:
    kind = t.require("kind", str).upper()
    try:
        kind = Kind(kind)
    except ValueError as exc:
        raise ConfigError(f"{t.where}.kind: must be one of HTG, CG, RG, INF") from exc
    try:
        gen = GeneratorParams(
            H=t.require("H", float),
            xd=t.get("xd", t.data.get("xd_prime"), float),
            xd_prime=t.require("xd_prime", float),
            Td0_prime=t.get("Td0_prime", 1.0, float),
            D=t.get("D", 0.0, float),
            omega_s=t.get("omega_s", 2.0 * math.pi * 50.0, float),
        )
        g = t.sub("governor")
        gov = GovernorParams(kind=kind, **{k: g.get(k, kind=float) for k in _GOV_FIELDS if k in g.data})
        for k in _GOV_FIELDS:
            g.used.add(k)
        g.finish()
        lt = t.sub("limits")
        base = ActuatorLimits()
        limits = ActuatorLimits(
            ef=_pair(lt, "ef", base.ef),
            mu_W=_pair(lt, "mu_W", base.mu_W),
            mu_C=_pair(lt, "mu_C", base.mu_C),
            mu_H=_pair(lt, "mu_H", base.mu_H),
            mu_I=_pair(lt, "mu_I", base.mu_I),
        )
        lt.finish()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{t.where}: {exc}") from exc
    spec = MachineSpec(
        name=t.require("name", str),
        bus=t.require("bus", int),
        generator=gen,
        governor=gov,
        limits=limits,
        U0=t.get("U0", 1.0, float),
        P0=t.get("P0", 0.0, float),
        emf=t.get("emf", 1.0, float),
    )
    t.finish()
    return spec


def _gains(t: _Table, default: GainBlocks) -> GainBlocks:
    k = t.get("k", None, list)
    if k is None:
        return default
    if len(k) != 5:
        raise ConfigError(f"{t.where}.k: expected five gains k1..k5")
    return GainBlocks(*map(float, k))


def _constants(t: _Table, default: SurrogateConstants) -> SurrogateConstants:
    a = t.get("a", None, list)
    if a is None:
        return default
    if len(a) != 4:
        raise ConfigError(f"{t.where}.a: expected four constants a1..a4")
    return SurrogateConstants(*map(float, a))


def parse_config(data: dict, source: str = "<config>") -> ScenarioConfig:
    root = _Table(data, "")
    schema = root.require("schema", int)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema version {schema} (expected {SCHEMA_VERSION})")
    name = root.get("name", Path(source).stem, str)

    st = root.sub("sim")
    sim = SimSettings(t_end=st.get("t_end", 10.0, float), dt=st.get("dt", 1e-3, float))
    st.finish()

    machines = tuple(_machine(m) for m in root.items("machine"))
    if not machines:
        raise ConfigError("config defines no machines")

    nt = root.sub("network")
    buses = []
    for b in nt.items("bus"):
        buses.append(Bus(id=b.require("id", int), g=b.get("g", 0.0, float), b=b.get("b", 0.0, float)))
        b.finish()
    branches = []
    for br in nt.items("branch"):
        branches.append(Branch(
            id=str(br.require("id", (str, int))),
            from_bus=br.require("from", int),
            to_bus=br.require("to", int),
            r=br.get("r", 0.0, float),
            x=br.get("x", 0.1, float),
            in_service=br.get("in_service", True, bool),
        ))
        br.finish()
    fault_g = nt.get("fault_g", DEFAULT_FAULT_ADMITTANCE.real, float)
    fault_b = nt.get("fault_b", 0.0, float)
    nt.finish()
    attachments = tuple(
        Attachment(machine=i, bus=m.bus, xd_prime=m.generator.xd_prime) for i, m in enumerate(machines)
    )
    try:
        network = NetworkSpec(tuple(buses), tuple(branches), attachments,
                              fault_admittance=complex(fault_g, fault_b))
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc

    ct = root.sub("controller")
    default_gains = _gains(ct, GainBlocks())
    default_constants = _constants(ct, SurrogateConstants())
    gains, constants = {}, {}
    per = ct.sub("machine")
    for mname in list(per.data):
        mt = _Table(per.get(mname), f"controller.machine.{mname}")
        if mname not in {m.name for m in machines}:
            raise ConfigError(f"controller.machine.{mname}: unknown machine")
        gains[mname] = _gains(mt, default_gains)
        constants[mname] = _constants(mt, default_constants)
        mt.finish()
    controller = ControllerConfig(
        default_constants=default_constants,
        default_gains=default_gains,
        constants=constants,
        gains=gains,
        pr_floor=ct.get("pr_floor", 0.05, float),
        de_floor=ct.get("de_floor", 1e-6, float),
    )
    ct.finish()

    events = []
    for ev in root.items("event"):
        try:
            events.append(NetworkEvent(kind=ev.require("kind", str), target=ev.require("target", (int, str)),
                                       time=ev.require("time", float)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{ev.where}: {exc}") from exc
        ev.finish()
    steps = []
    for s in root.items("step"):
        steps.append(ReferenceStep(time=s.require("time", float), machine=s.require("machine", str),
                                   U0=s.get("U0", None, float), P0=s.get("P0", None, float)))
        s.finish()

    vt = root.sub("verdict")
    dv = VerdictSettings()
    verdict = VerdictSettings(
        track_tol=vt.get("track_tol", dv.track_tol, float),
        omega_tol=vt.get("omega_tol", dv.omega_tol, float),
        angle_spread=vt.get("angle_spread", dv.angle_spread, float),
        abort_speed=vt.get("abort_speed", dv.abort_speed, float),
        vdot_floor=vt.get("vdot_floor", dv.vdot_floor, float),
    )
    vt.finish()

    ot = root.sub("output")
    outputs = OutputSettings(csv=ot.get("csv", None, str), report=ot.get("report", None, str),
                             plot_script=ot.get("plot_script", False, bool))
    ot.finish()

    de = ExperimentSettings()
    vr = root.sub("vr")
    pr = root.sub("pr")
    fa = root.sub("fault")
    cc = root.sub("cct")
    cct_t_end = cc.get("t_end", None, float)
    experiments = ExperimentSettings(
        step_time=vr.get("time", pr.get("time", de.step_time, float), float),
        vr_targets=_float_map(vr, "targets"),
        pr_targets=_float_map(pr, "targets"),
        fault_time=fa.get("time", de.fault_time, float),
        fault_bus=fa.get("bus", None, int),
        fault_line=None if fa.get("line", None) is None else str(fa.get("line")),
        clearing=fa.get("clearing", de.clearing, float),
        cct_lo=cc.get("lo", de.cct_lo, float),
        cct_hi=cc.get("hi", de.cct_hi, float),
        cct_tol=cc.get("tol", de.cct_tol, float),
        cct_t_end=cct_t_end,
    )
    for t in (vr, pr, fa, cc):
        t.finish()
    root.finish()

    return ScenarioConfig(name=name, network=network, machines=machines, controller=controller,
                          events=tuple(events), steps=tuple(steps), sim=sim, outputs=outputs,
                          verdict=verdict, experiments=experiments)


def load_config(path) -> ScenarioConfig:
    """Read a scenario file, or a bundled one by name (``four-machine``, ``smib``)."""
    p = Path(path)
    if not p.exists():
        bundled = DATA_DIR / f"{str(path).replace('-', '_')}.toml"
        if bundled.exists():
            p = bundled
        else:
            raise ConfigError(f"config file {path} not found")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(data, str(p))


def builtin_names() -> list[str]:
    return sorted(p.stem.replace("_", "-") for p in DATA_DIR.glob("*.toml"))
