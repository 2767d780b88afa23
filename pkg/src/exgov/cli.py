"""Command-line entry point.

Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 on a
configuration or numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from exgov.errors import ExgovError
from exgov.scenarios import export as ex
from exgov.scenarios.config import load_config
from exgov.scenarios.experiments import cct_search, fault_scenario, pr_scenario, vr_scenario
from exgov.scenarios.simulate import certificate_for, run

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
DEFAULT_CONFIG = "four-machine"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG,
                        help="scenario file, or a bundled system name (default: four-machine)")
    common.add_argument("--out", type=Path, default=None, help="directory for CSV/report output")
    common.add_argument("--dt", type=float, default=None, help="integration step, s")
    common.add_argument("--t-end", type=float, default=None, help="simulated horizon, s")
    common.add_argument("--quiet", action="store_true", help="print nothing but errors")

    p = argparse.ArgumentParser(prog="exgov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="surrogate controllability and GAS certificate")
    sub.add_parser("run", parents=[common], help="simulate the configured events and steps")
    sub.add_parser("vr", parents=[common], help="voltage-reference step experiment")
    sub.add_parser("pr", parents=[common], help="power-reference step experiment")
    f = sub.add_parser("fault", parents=[common], help="three-phase fault with line removal")
    f.add_argument("--clearing", type=float, default=None, help="fault duration, s")
    c = sub.add_parser("cct", parents=[common], help="critical clearing time search")
    c.add_argument("--lo", type=float, default=None)
    c.add_argument("--hi", type=float, default=None)
    c.add_argument("--tol", type=float, default=None)
    c.add_argument("--prescan", type=int, default=0, help="parallel pre-scan grid size")
    return p


def _emit(args, payload: dict) -> None:
    if not args.quiet:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _finish(args, cfg, result, cert, stem) -> int:
    report = ex.run_report(cfg, cert, result.verdict, result.lyapunov)
    if args.out is not None and result.trajectory is not None and len(result.trajectory.t):
        ex.export(result.trajectory, cfg, args.out, report, stem=f"{cfg.name}-{stem}")
    _emit(args, {"verdict": report.get("verdict"), "lyapunov": report.get("lyapunov")})
    return EXIT_PASS if result.verdict.passed else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config).with_sim(t_end=args.t_end, dt=args.dt)
        cert = certificate_for(cfg)
        if args.command == "certify":
            _emit(args, cert.summary())
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / f"{cfg.name}-certificate.json").write_text(cert.to_text() + "\n")
            return EXIT_PASS if cert.certified else EXIT_FAIL
        if args.command == "run":
            traj = run(cfg)
            report = ex.run_report(cfg, cert)
            if args.out is not None:
                ex.export(traj, cfg, args.out, report, stem=f"{cfg.name}-run")
            _emit(args, {"samples": len(traj.t), "final_Ut": traj.Ut[-1].tolist(),
                         "final_Pe": traj.Pe[-1].tolist()})
            return EXIT_PASS
        if args.command == "vr":
            return _finish(args, cfg, vr_scenario(cfg), cert, "vr")
        if args.command == "pr":
            return _finish(args, cfg, pr_scenario(cfg), cert, "pr")
        if args.command == "fault":
            return _finish(args, cfg, fault_scenario(cfg, args.clearing), cert, "fault")
        if args.command == "cct":
            res = cct_search(cfg, args.lo, args.hi, args.tol, prescan=args.prescan)
            if args.out is not None:
                ex.write_report(ex.run_report(cfg, cert, extra={"cct": res.to_dict()}),
                                args.out / f"{cfg.name}-cct.json")
            _emit(args, res.to_dict())
            return EXIT_FAIL if res.non_monotone else EXIT_PASS
    except (ExgovError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
