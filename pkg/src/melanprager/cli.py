"""Command line entry point.

Subcommands ``run``, ``converge``, ``mpoint`` and ``check``.  The report
goes to stdout, diagnostics to stderr.  Exit codes: 0 success, 2 invariant
violation, 3 solver failure, 4 bad input.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .checks import run_all
from .mesh import MeshError
from .scenario import (
    ScenarioError,
    converge,
    resolve_scenario,
    run,
    scenario_material_point,
    yield_events,
)
from .step import ConstraintViolation, ConvergenceError
from .tensor import norm

__all__ = ["RunReport", "main", "EXIT_OK", "EXIT_INVARIANT", "EXIT_SOLVER", "EXIT_INPUT"]

EXIT_OK, EXIT_INVARIANT, EXIT_SOLVER, EXIT_INPUT = 0, 2, 3, 4
log = logging.getLogger("melanprager")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunReport:
    """Outcome of one CLI invocation."""

    scenario: str
    steps: int
    wall_time: float
    monitors: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.monitors.values())

    def format(self) -> str:
        lines = [f"scenario   {self.scenario}", f"steps      {self.steps}", f"wall time  {self.wall_time:.2f} s"]
        if self.monitors:
            lines.append("monitors")
            for name, (ok, detail) in self.monitors.items():
                lines.append(f"  {'PASS' if ok else 'FAIL'}  {name:<28} {detail}")
        if self.files:
            lines.append("files")
            lines += [f"  {f}" for f in self.files]
        return "\n".join(lines)


def _common(p):
    p.add_argument("--output-dir", type=Path, default=None, help="directory for CSV and VTK output")
    p.add_argument("--quiet", action="store_true", help="suppress the stdout report")
    p.add_argument("--verbose", action="store_true", help="log every ledger row to stderr")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="melanprager", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("run", help="advance a scenario and write the energy ledger and snapshots")
    p.add_argument("scenario", help="scenario file or built-in name")
    _common(p)
    p = sub.add_parser("converge", help="time-step convergence study")
    p.add_argument("scenario")
    p.add_argument("--levels", type=int, default=3, help="number of step counts N, 2N, 4N, ...")
    _common(p)
    p = sub.add_parser("mpoint", help="material-point run driven by the scenario's h and g")
    p.add_argument("scenario")
    _common(p)
    p = sub.add_parser("check", help="randomized law checks and invariants of all shipped scenarios")
    _common(p)
    return parser


def _out_dir(args, name) -> Path:
    return args.output_dir if args.output_dir is not None else Path(f"{name}-output")


def _monitors(result) -> dict:
    s = result.summary()
    scale = s["scale"]
    bal, dis = s["max_slack_balance"] / scale, s["max_slack_dissipation"] / scale
    excess = max(result.max_constraint_excess, 0.0)
    return {
        "yield constraint": (excess <= 1e-10, f"max excess {excess:.2e}"),
        "trace conservation": (result.max_trace_drift <= 1e-13, f"max drift {result.max_trace_drift:.2e}"),
        "dissipation inequality": (dis <= 1e-10, f"max slack/scale {dis:.2e}"),
        "energy balance inequality": (bal <= 1e-9, f"max slack/scale {bal:.2e}"),
        "stress gap": (True, f"{s['sigma_gap']:.6e}"),
    }


def _cmd_run(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = _out_dir(args, sc.name)

    def progress(n, state, row):
        log.debug("step %d t=%.6g slack_balance=%.3e slack_dissipation=%.3e plastic=%d",
                  n, row["t"], row["slack_balance"], row["slack_dissipation"], int(state.plastic.sum()))

    res = run(sc, output_dir=out, keep_history=False, progress=progress)
    report = RunReport(sc.name, sc.N, res.wall_time, _monitors(res), [str(f) for f in res.files])
    if not args.quiet:
        print(report.format())
    return EXIT_OK if report.passed else EXIT_INVARIANT


def _cmd_converge(args) -> int:
    sc = resolve_scenario(args.scenario)
    if args.levels < 2:
        raise ScenarioError("--levels must be at least 2")
    out = _out_dir(args, sc.name)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    table = converge(sc, args.levels, progress=lambda level, r: log.info("level %d done (dt=%g)", level, r.dt))
    path = out / "convergence.csv"
    table.to_csv(path)
    if not args.quiet:
        print(f"{'level':>5} {'dt':>12} {'diff_v':>12} {'diff_sigma':>12} {'diff_alpha':>12} {'sigma_gap':>12}")
        for r in table.rows:
            print(f"{r['level']:>5} {r['dt']:>12.5g} {r['diff_v']:>12.4e} {r['diff_sigma']:>12.4e} "
                  f"{r['diff_alpha']:>12.4e} {r['sigma_gap']:>12.4e}")
        print(RunReport(sc.name, sc.N * 2 ** (args.levels - 1), time.perf_counter() - start, files=[str(path)]).format())
    return EXIT_OK


def _cmd_mpoint(args) -> int:
    sc = resolve_scenario(args.scenario)
    start = time.perf_counter()
    res = scenario_material_point(sc)
    out = _out_dir(args, sc.name)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mpoint.csv"
    res.to_csv(path)
    monitors = {"plastic steps": (True, str(int(res.plastic.sum())))}
    try:
        ev = yield_events(res)
        monitors["forward yield |s^D|"] = (True, f"{float(norm(ev.forward_yield)):.6g}")
        monitors["reverse yield gap"] = (True, f"{ev.reverse_gap:.6g}")
    except ValueError as exc:
        log.info("no yield events: %s", exc)
    report = RunReport(sc.name, sc.N, time.perf_counter() - start, monitors, [str(path)])
    if not args.quiet:
        print(report.format())
    return EXIT_OK


def _cmd_check(args) -> int:
    start = time.perf_counter()
    results = run_all(seed=args.seed)
    ok = all(r.passed for r in results)
    if not args.quiet:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<48} worst {r.worst:.3e}  tol {r.tol:.0e}")
        print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {time.perf_counter() - start:.1f} s")
    return EXIT_OK if ok else EXIT_INVARIANT


_COMMANDS = {"run": _cmd_run, "converge": _cmd_converge, "mpoint": _cmd_mpoint, "check": _cmd_check}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT

    level = logging.DEBUG if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConstraintViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
