"""CSV trajectories, JSON run reports and optional plot scripts."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from exgov.plant import Kind
from exgov.scenarios.config import ScenarioConfig
from exgov.scenarios.simulate import Trajectory

CSV_FORMAT = ".17g"


def csv_columns(traj: Trajectory) -> list[tuple[str, np.ndarray]]:
    """Column order: time; every state; then per machine U_t, P_e, U0, P0;
    then feedback entries; then raw and applied commands; then V."""
    cols = [("t", traj.t)]
    cols += [(label, traj.x[:, k]) for k, label in enumerate(traj.state_labels)]
    for i, name in enumerate(traj.machine_names):
        cols += [(f"{name}.Ut", traj.Ut[:, i]), (f"{name}.Pe", traj.Pe[:, i]),
                 (f"{name}.U0", traj.U0[:, i]), (f"{name}.P0", traj.P0[:, i])]
    cols += [(f"{label}", traj.y[:, k]) for k, label in enumerate(traj.feedback_labels)]
    cols += [(f"{label}.raw", traj.u_raw[:, k]) for k, label in enumerate(traj.channel_labels)]
    cols += [(f"{label}.applied", traj.u_sat[:, k]) for k, label in enumerate(traj.channel_labels)]
    cols += [("V", traj.V), ("saturated", traj.saturated.astype(float))]
    return cols


def trajectory_csv(traj: Trajectory) -> str:
    cols = csv_columns(traj)
    buf = io.StringIO()
    buf.write("# exgov trajectory\n")
    buf.write(f"# dt = {format(traj.dt, CSV_FORMAT)} s, samples = {len(traj.t)}\n")
    buf.write("# columns: t; states <machine>.<state>; <machine>.Ut/Pe/U0/P0; "
              "feedback <machine>.d_<signal>; commands <machine>.<channel>.raw/.applied; V; saturated\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in cols])
    data = np.column_stack([c for _, c in cols])
    for row in data:
        w.writerow([format(float(v), CSV_FORMAT) for v in row])
    return buf.getvalue()


def write_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trajectory_csv(traj), encoding="utf-8")
    return path


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Kind):
        return obj.value
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_echo(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "sim": _plain(cfg.sim),
        "machines": [_plain(m) for m in cfg.machines],
        "events": [_plain(e) for e in cfg.events],
        "steps": [_plain(s) for s in cfg.steps],
        "controller": _plain(cfg.controller),
        "verdict": _plain(cfg.verdict),
    }


def run_report(cfg: ScenarioConfig, certificate=None, verdict=None, lyapunov=None,
               extra: dict | None = None) -> dict:
    report = {"config": config_echo(cfg)}
    if certificate is not None:
        report["certificate"] = certificate.summary()
    if verdict is not None:
        report["verdict"] = _plain(verdict.to_dict() if hasattr(verdict, "to_dict") else verdict)
    if lyapunov is not None:
        report["lyapunov"] = lyapunov.summary()
        report["lyapunov"]["violation_times"] = [s.t for s in lyapunov.unsaturated_violations[:50]]
    if extra:
        report.update(_plain(extra))
    return _plain(report)


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


PLOT_TEMPLATE = '''"""Plot terminal voltage, active power and speed from an exgov CSV."""
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv!r}
data = np.genfromtxt(path, delimiter=",", names=True, comments="#", deletechars="")
machines = {machines!r}
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 8))
for m in machines:
    axes[0].plot(data["t"], data[m + ".Ut"], label=m)
    axes[1].plot(data["t"], data[m + ".Pe"], label=m)
    axes[2].plot(data["t"], data[m + ".omega"], label=m)
axes[0].set_ylabel("U_t (p.u.)")
axes[1].set_ylabel("P_e (p.u.)")
axes[2].set_ylabel("omega (p.u.)")
axes[2].set_xlabel("t (s)")
axes[0].legend(loc="best")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''


def write_plot_script(traj: Trajectory, csv_path, path) -> Path:
    path = Path(path)
    names = [n for n in traj.machine_names if f"{n}.omega" in traj.state_labels]
    path.write_text(PLOT_TEMPLATE.format(csv=str(csv_path), machines=names), encoding="utf-8")
    return path


def export(traj: Trajectory, cfg: ScenarioConfig, out_dir, report: dict | None = None,
           stem: str | None = None) -> dict:
    """Write the CSV, the report and (if configured) the plot script."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or cfg.name
    csv_path = out / (cfg.outputs.csv or f"{stem}.csv")
    files = {"csv": write_csv(traj, csv_path)}
    files["report"] = write_report(report or run_report(cfg), out / (cfg.outputs.report or f"{stem}.json"))
    if cfg.outputs.plot_script:
        files["plot_script"] = write_plot_script(traj, csv_path.name, out / f"plot_{stem}.py")
    return files
