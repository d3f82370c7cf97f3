"""Command-line batch runner.

    controlled-teleport --config scenario.json --out reports/ [--seed S] [--mode exact|sampled]
    controlled-teleport --config scenario.json --check
    controlled-teleport sweep --config scenario.json --out reports/ --axis k --values 1 2 3

Exit status: 0 on success, 2 for an unreadable or invalid config, 3 when an
invariant fails during simulation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Scenario, load_scenario, parse_scenario
from .errors import ConfigurationError, InvariantError
from .measurement import bell_projectors
from .protocol import (
    Mode,
    default_order,
    iter_protocol_branches,
    receiver_densities,
    variant_equivalence_check,
)
from .qstate import ATOL, GATES
from .report import evaluate, write_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
SWEEP_AXES = ("k", "n", "m", "trajectories", "quad_nodes")


def run_scenario(
    config_path,
    out_dir,
    seed: int | None = None,
    mode: str | None = None,
    workers: int = 1,
) -> int:
    try:
        scenario = load_scenario(config_path)
        if seed is not None or mode is not None:
            scenario = scenario.with_overrides(seed, mode)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = evaluate(scenario, workers)
    except InvariantError as exc:
        print(f"invariant violated: {exc.invariant}: {exc.detail}", file=sys.stderr)
        return EXIT_INVARIANT
    write_report(report, out_dir)
    print(report.files["summary.txt"], end="")
    return EXIT_OK


def check_invariants(scenario: Scenario) -> list[tuple[str, bool, str]]:
    """Invariant suite for a scenario, without writing reports."""
    results = []
    total = sum(bell_projectors())
    err = float(np.max(np.abs(total - np.eye(4))))
    results.append(("bell_completeness", err <= ATOL, f"{err:.2e}"))
    worst = max(float(np.max(np.abs(g.matrix.conj().T @ g.matrix - np.eye(2)))) for g in GATES.values())
    results.append(("gate_unitarity", worst <= ATOL, f"{worst:.2e}"))
    for j, config in enumerate(scenario.configs()):
        config = replace(config, mode=Mode.EXACT)
        try:
            branches = list(iter_protocol_branches(config))
        except InvariantError as exc:
            results.append((f"state_invariants[{j}]", False, str(exc)))
            continue
        total_p = sum(b.probability for b in branches)
        results.append((f"born_rule[{j}]", abs(total_p - 1) <= ATOL, f"{total_p:.15f}"))
        if config.policy.k == 0:
            worst = min(min(b.fidelities(config.messages)) for b in branches)
            results.append((f"teleportation_correctness[{j}]", worst >= 1 - ATOL, f"min F {worst:.15f}"))
        results.append((f"variant_equivalence[{j}]", variant_equivalence_check(config), ""))
        reverse = list(reversed(default_order(config)))
        a = receiver_densities(branches)
        b = receiver_densities(iter_protocol_branches(config, order=reverse))
        ok = a.keys() == b.keys() and all(
            abs(a[key][0] - b[key][0]) <= ATOL and a[key][1].max_abs_diff(b[key][1]) <= ATOL for key in a
        )
        results.append((f"order_independence[{j}]", ok, "reversed step order"))
    return results


def _sweep_raw(raw: dict, axis: str, value: int) -> dict:
    raw = copy.deepcopy(raw)
    if axis == "k":
        raw["policy"] = {"k": value}
    elif axis == "n":
        k = parse_scenario(raw).policy.k
        raw["n"] = value
        raw["policy"] = {"k": min(k, value)}
    elif axis == "m":
        raw["m"] = value
    elif axis == "trajectories":
        raw["mode"] = "sampled"
        raw["trajectories"] = value
    else:
        quad = dict(raw.get("quad", {}))
        quad["theta_nodes"] = quad["phi_nodes"] = value
        raw["quad"] = quad
    return raw


def sweep(config_path, axis: str, values, out_dir, workers: int = 1) -> int:
    axis = axis.replace("-", "_")
    if axis not in SWEEP_AXES:
        print(f"error: unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        base = load_scenario(config_path)
        points = []
        for value in values:
            scenario = parse_scenario(_sweep_raw(base.raw, axis, int(value)))
            points.append((int(value), replace(scenario, config_sha256=base.config_sha256)))
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    rows = []
    for value, scenario in points:
        try:
            report = evaluate(scenario, workers)
        except InvariantError as exc:
            print(f"invariant violated at {axis}={value}: {exc.invariant}: {exc.detail}", file=sys.stderr)
            return EXIT_INVARIANT
        write_report(report, out / f"{axis}={value}")
        rows.append({axis: value, **{key: f"{v:.15g}" for key, v in sorted(report.metrics.items())}})
    columns = [axis] + sorted({key for row in rows for key in row if key != axis})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", restval="")
    writer.writeheader()
    writer.writerows(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{axis}.csv").write_text(buf.getvalue(), encoding="utf-8")
    print(buf.getvalue(), end="")
    return EXIT_OK


def _run_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="controlled-teleport", description="Run a teleportation scenario")
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out", help="report directory (required unless --check)")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--mode", choices=["exact", "sampled"], help="override the evaluation mode")
    parser.add_argument("--check", action="store_true", help="run the invariant suite only")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def _sweep_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="controlled-teleport sweep", description="Sweep one parameter")
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--axis", required=True, help=f"one of {', '.join(SWEEP_AXES)}")
    parser.add_argument("--values", required=True, nargs="+")
    parser.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "sweep":
        args = _sweep_parser().parse_args(argv[1:])
        return sweep(args.config, args.axis, args.values, args.out, args.workers)
    if argv and argv[0] == "run":
        argv = argv[1:]
    parser = _run_parser()
    args = parser.parse_args(argv)
    if args.check:
        try:
            scenario = load_scenario(args.config)
            if args.seed is not None or args.mode is not None:
                scenario = scenario.with_overrides(args.seed, args.mode)
        except (OSError, ConfigurationError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        results = check_invariants(scenario)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVARIANT
    if not args.out:
        parser.error("--out is required unless --check is given")
    return run_scenario(args.config, args.out, args.seed, args.mode, args.workers)


if __name__ == "__main__":
    sys.exit(main())
