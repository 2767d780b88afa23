"""Experiment classes run on top of :func:`run`: VR and PR reference steps,
faults with line removal, and the critical-clearing-time search."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from exgov.certify import LyapunovReport, vdot_series
from exgov.errors import BracketError, ConfigError, SimulationDiverged
from exgov.network import CLEAR, FAULT, NetworkEvent
from exgov.scenarios.config import ReferenceStep, ScenarioConfig
from exgov.scenarios.simulate import Trajectory, initialize_equilibrium, run


@dataclass
class Verdict:
    passed: bool
    checks: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks, "diagnostics": self.diagnostics}


@dataclass
class ScenarioResult:
    kind: str
    trajectory: Trajectory | None
    verdict: Verdict
    lyapunov: LyapunovReport | None = None
    diverged: SimulationDiverged | None = None


def _saturation_diagnostics(traj: Trajectory, after: float) -> list[str]:
    out = []
    post = traj.t > after
    tail = traj.t >= traj.t[-1] - 1.0
    for k, label in enumerate(traj.channel_labels):
        hit = traj.clipped[:, k]
        if np.any(hit & post):
            frac = float(np.mean(hit[post]))
            late = bool(np.any(hit & tail))
            out.append(f"{label} saturated on {frac:.1%} of post-step samples"
                       + (" and still saturated in the last second" if late else ""))
    return out


def _tracking_verdict(traj: Trajectory, cfg: ScenarioConfig, step_time: float,
                      voltage_targets: dict, power_targets: dict) -> Verdict:
    tol = cfg.verdict.track_tol
    checks = {}
    ok = True
    for i, m in enumerate(cfg.machines):
        if not m.controlled:
            continue
        u_goal = voltage_targets.get(m.name, traj.Ut[0, i])
        p_goal = power_targets.get(m.name, traj.Pe[0, i])
        du = abs(float(traj.Ut[-1, i]) - u_goal)
        dp = abs(float(traj.Pe[-1, i]) - p_goal)
        checks[m.name] = {"Ut_error": du, "Pe_error": dp, "Ut_ok": du <= tol, "Pe_ok": dp <= tol}
        ok &= du <= tol and dp <= tol
    return Verdict(bool(ok), checks, [] if ok else _saturation_diagnostics(traj, step_time))


def _reference_run(cfg: ScenarioConfig, kind: str, targets: dict, time: float) -> ScenarioResult:
    names = {m.name for m in cfg.machines if m.controlled}
    unknown = set(targets) - names
    if unknown:
        raise ConfigError(f"{kind} targets for unknown or uncontrolled machines {sorted(unknown)}")
    key = "U0" if kind == "vr" else "P0"
    steps = tuple(ReferenceStep(time=time, machine=name, **{key: v}) for name, v in targets.items())
    cfg = cfg.with_changes(steps=cfg.steps + steps)
    try:
        traj = run(cfg)
    except SimulationDiverged as exc:
        return ScenarioResult(kind, exc.trajectory, Verdict(False, {}, [str(exc)]), diverged=exc)
    v_targets = targets if kind == "vr" else {}
    p_targets = targets if kind == "pr" else {}
    verdict = _tracking_verdict(traj, cfg, time, v_targets, p_targets)
    report = vdot_series(traj, cfg.verdict.vdot_floor, after=time)
    return ScenarioResult(kind, traj, verdict, report)


def vr_scenario(cfg: ScenarioConfig, targets: dict | None = None, time: float | None = None
                ) -> ScenarioResult:
    """Voltage-reference steps; passes when every U_t reaches its target and
    every P_e is back at its initial value at ``t_end``."""
    ex = cfg.experiments
    return _reference_run(cfg, "vr", ex.vr_targets if targets is None else targets,
                          ex.step_time if time is None else time)


def pr_scenario(cfg: ScenarioConfig, targets: dict | None = None, time: float | None = None
                ) -> ScenarioResult:
    """Power-reference steps, the mirror image of :func:`vr_scenario`."""
    ex = cfg.experiments
    return _reference_run(cfg, "pr", ex.pr_targets if targets is None else targets,
                          ex.step_time if time is None else time)


def fault_events(cfg: ScenarioConfig, clearing: float, bus=None, line=None, time=None):
    ex = cfg.experiments
    bus = ex.fault_bus if bus is None else bus
    line = ex.fault_line if line is None else line
    time = ex.fault_time if time is None else time
    if bus is None or line is None:
        raise ConfigError("fault scenario needs a fault bus and a line to remove")
    if clearing < 0:
        raise ConfigError("clearing time must be >= 0")
    return (NetworkEvent(FAULT, int(bus), time), NetworkEvent(CLEAR, str(line), time + clearing))


def stability_verdict(traj: Trajectory, cfg: ScenarioConfig) -> Verdict:
    tol = cfg.verdict.omega_tol
    dev = float(np.max(np.abs(traj.omega()[-1] - 1.0)))
    spread = float(traj.angle_spread()[-1])
    checks = {"max_speed_deviation": dev, "angle_spread": spread,
              "speed_ok": dev <= tol, "spread_ok": spread <= cfg.verdict.angle_spread}
    return Verdict(bool(checks["speed_ok"] and checks["spread_ok"]), checks)


def fault_scenario(cfg: ScenarioConfig, clearing: float | None = None, bus=None, line=None,
                   time=None, t_end: float | None = None) -> ScenarioResult:
    """Three-phase fault at ``time``, cleared by removing ``line`` after ``clearing`` s."""
    clearing = cfg.experiments.clearing if clearing is None else clearing
    events = fault_events(cfg, clearing, bus, line, time)
    t_end = cfg.sim.t_end if t_end is None else t_end
    if events[1].time > t_end:
        # a fault still on at t_end is unstable by definition; simulate up to t_end
        events = events[:1]
    cfg = cfg.with_changes(events=cfg.events + events).with_sim(t_end=t_end)
    try:
        traj = run(cfg)
    except SimulationDiverged as exc:
        return ScenarioResult("fault", exc.trajectory, Verdict(False, {"diverged_at": exc.t}, [exc.reason]),
                              diverged=exc)
    verdict = stability_verdict(traj, cfg)
    if len(events) == 1:
        verdict = Verdict(False, verdict.checks, ["fault not cleared before t_end"])
    report = vdot_series(traj, cfg.verdict.vdot_floor, after=events[-1].time)
    return ScenarioResult("fault", traj, verdict, report)


@dataclass
class CctResult:
    fault_bus: int
    line: str
    lower: float
    upper: float
    cct: float
    tol: float
    trials: list
    non_monotone: bool = False

    def to_dict(self) -> dict:
        return {
            "fault_bus": self.fault_bus, "line": self.line, "lower": self.lower, "upper": self.upper,
            "cct": self.cct, "tol": self.tol, "non_monotone": self.non_monotone,
            "trials": [{"clearing": c, "stable": s} for c, s in self.trials],
        }


def bisection_trials(lo: float, hi: float, tol: float) -> int:
    width = hi - lo
    return max(0, math.ceil(math.log2(width / (2.0 * tol)))) if width > 2.0 * tol else 0


def _is_stable(args) -> bool:
    cfg, clearing, bus, line, t_end = args
    return fault_scenario(cfg, clearing, bus, line, t_end=t_end).verdict.passed


def cct_search(cfg: ScenarioConfig, lo: float | None = None, hi: float | None = None,
               tol: float | None = None, bus=None, line=None, prescan: int = 0,
               workers: int | None = None) -> CctResult:
    """Bisect the clearing time between a stable ``lo`` and an unstable ``hi``.

    Terminates once ``hi - lo <= 2 tol``; the reported CCT is the midpoint.
    ``prescan > 0`` first evaluates that many evenly spaced clearing times in
    parallel processes to detect non-monotone verdicts and narrow the bracket;
    ``workers=0`` runs that pre-scan in the calling process.
    """
    ex = cfg.experiments
    lo = ex.cct_lo if lo is None else lo
    hi = ex.cct_hi if hi is None else hi
    tol = ex.cct_tol if tol is None else tol
    bus = ex.fault_bus if bus is None else bus
    line = ex.fault_line if line is None else line
    t_end = ex.cct_t_end or cfg.sim.t_end
    if not (0 <= lo < hi) or not tol > 0:
        raise BracketError("need 0 <= lo < hi and tol > 0")
    initialize_equilibrium(cfg)  # fail early on an infeasible base case

    def stable(c):
        return _is_stable((cfg, c, bus, line, t_end))

    trials = []
    non_monotone = False
    if not stable(lo):
        raise BracketError(f"lower bracket {lo} s is not stable")
    if stable(hi):
        raise BracketError(f"upper bracket {hi} s is stable")
    trials += [(lo, True), (hi, False)]

    if prescan > 0:
        grid = list(np.linspace(lo, hi, prescan + 2)[1:-1])
        jobs = [(cfg, float(c), bus, line, t_end) for c in grid]
        if workers == 0:
            verdicts = [_is_stable(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                verdicts = list(pool.map(_is_stable, jobs))
        trials += list(zip(map(float, grid), verdicts))
        seq = [True] + verdicts + [False]
        non_monotone = any(not a and b for a, b in zip(seq, seq[1:]))
        first_bad = seq.index(False)
        pts = [lo] + [float(c) for c in grid] + [hi]
        lo, hi = pts[first_bad - 1], pts[first_bad]

    for _ in range(bisection_trials(lo, hi, tol)):
        mid = 0.5 * (lo + hi)
        ok = stable(mid)
        trials.append((mid, ok))
        if ok:
            lo = mid
        else:
            hi = mid
    # any stable verdict above an unstable one flags a non-monotone boundary
    st = sorted(trials)
    seen_unstable = False
    for _, ok in st:
        if not ok:
            seen_unstable = True
        elif seen_unstable:
            non_monotone = True
    return CctResult(int(bus), str(line), lo, hi, 0.5 * (lo + hi), tol, trials, non_monotone)
