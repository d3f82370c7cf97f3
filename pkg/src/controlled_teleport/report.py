"""Evaluate a scenario and render its report files.

Every file is a pure function of the scenario: no timestamps, fixed float
formats, results ordered by message-set index whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    OutcomeClass,
    PriorCase,
    average_fidelity,
    bloch_average,
    bob_reduced_density,
    closed_form_rho,
    fidelity_record,
    prior_scheme_average_fidelity,
    random_correction_strategy,
)
from .config import Scenario
from .errors import InvariantError
from .measurement import BELL_OUTCOMES, BellOutcome
from .protocol import (
    CooperationPolicy,
    MessageState,
    Mode,
    ScenarioConfig,
    Strategy,
    iter_protocol_branches,
    sample_trajectories,
)
from .qstate import ATOL, fidelity

SCHEMA_VERSION = 1
BRANCH_COLUMNS = ["message_set", "branch", "outcome", "hidden", "probability", "correction"]
ANALYTIC = {OutcomeClass.PLUS: 2 / 3, OutcomeClass.MINUS: 1 / 3}


def _matrix(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _fid_columns(m: int) -> list[str]:
    return [f"fidelity_{i}" for i in range(1, m + 1)]


@dataclass
class ConfigResult:
    rows: list = field(default_factory=list)
    density: list = field(default_factory=list)
    fidelities: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    total_probability: float = 0.0
    max_z: float = 0.0
    max_freq_error: float = 0.0
    max_sigma: float = 0.0


def _branch_row(j: int, b: int, br, fids) -> dict:
    row = {
        "message_set": j,
        "branch": b,
        "outcome": br.transcript.label(),
        "hidden": "".join(f"{l}:{v}" for l, v in sorted(br.hidden_bits.items())) or "-",
        "probability": f"{br.probability:.15e}",
        "correction": "/".join(br.corrections) or "none",
    }
    row.update({f"fidelity_{i}": f"{f:.15f}" for i, f in enumerate(fids, start=1)})
    return row


def _density_records(j: int, config: ScenarioConfig, branches) -> list[dict]:
    records = []
    if config.policy.k == 0:
        for i in range(1, config.m + 1):
            rho = sum(br.probability * br.qubit_density(i).matrix for br in branches)
            rho = rho / sum(br.probability for br in branches)
            records.append({"message_set": j, "qubit": i, "kind": "corrected_mixture", "rho": _matrix(rho)})
        return records
    for i in range(1, config.m + 1):
        for outcome in BELL_OUTCOMES:
            record = [BellOutcome.PHI_PLUS] * config.m
            record[i - 1] = outcome
            rho = bob_reduced_density(config, config.policy, record, i)
            cls = OutcomeClass.of(outcome)
            closed = closed_form_rho(config.messages[i - 1], cls)
            delta = rho.max_abs_diff(closed)
            if delta > ATOL:
                raise InvariantError("closed_form_oracle", f"set {j} qubit {i} {outcome}: {delta:.3e}")
            records.append(
                {
                    "message_set": j,
                    "qubit": i,
                    "kind": "uncorrected",
                    "bell_outcome": outcome.value,
                    "outcome_class": cls.value,
                    "rho": _matrix(rho.matrix),
                    "rho_closed_form": _matrix(closed.matrix),
                    "max_abs_delta": float(delta),
                }
            )
    return records


def evaluate_config(args) -> ConfigResult:
    """Protocol run for one message set; top-level so worker processes can pickle it."""
    j, config = args
    result = ConfigResult()
    if config.mode is Mode.EXACT:
        branches = list(iter_protocol_branches(config))
        result.total_probability = math.fsum(br.probability for br in branches)
        if abs(result.total_probability - 1.0) > ATOL:
            raise InvariantError("born_rule", f"set {j}: probabilities sum to {result.total_probability!r}")
        for b, br in enumerate(branches):
            fids = br.fidelities(config.messages)
            result.rows.append(_branch_row(j, b, br, fids))
            result.fidelities.append(fids)
            result.weights.append(br.probability)
        result.density = _density_records(j, config, branches)
    else:
        trajectories = sample_trajectories(config)
        exact = {}
        for br in iter_protocol_branches(replace(config, mode=Mode.EXACT)):
            key = (br.transcript.key(), tuple(sorted(br.hidden_bits.items())))
            exact[key] = exact.get(key, 0.0) + br.probability
        counts = Counter()
        fid_cache = {}
        for t, br in enumerate(trajectories):
            if id(br) not in fid_cache:
                fid_cache[id(br)] = br.fidelities(config.messages)
            fids = fid_cache[id(br)]
            result.rows.append(_branch_row(j, t, br, fids))
            result.fidelities.append(fids)
            result.weights.append(1.0 / len(trajectories))
            counts[(br.transcript.key(), tuple(sorted(br.hidden_bits.items())))] += 1
        total = len(trajectories)
        for key, p in exact.items():
            sigma = math.sqrt(p * (1 - p) / total)
            err = abs(counts.get(key, 0) / total - p)
            result.max_freq_error = max(result.max_freq_error, err)
            result.max_sigma = max(result.max_sigma, sigma)
            if sigma > 0:
                result.max_z = max(result.max_z, err / sigma)
    if config.strategy is Strategy.FULL_CORRECTION:
        worst = min(min(f) for f in result.fidelities)
        if worst < 1 - ATOL:
            raise InvariantError("teleportation_correctness", f"set {j}: fidelity {worst!r}")
    return result


def _average_rows(scenario: Scenario) -> list[dict]:
    quad = scenario.quad
    rows = []
    for cls in OutcomeClass:
        value = average_fidelity(cls, quad)
        rows.append(_avg_row("closed_form", cls.value, value, ANALYTIC[cls], quad))
    for case in PriorCase:
        value = prior_scheme_average_fidelity(case, quad)
        rows.append(_avg_row("prior_scheme", case.value, value, 2 / 3, quad))
    rng = np.random.default_rng(scenario.seed)

    def corrected(theta, phi):
        msg = MessageState.from_angles(theta, phi)
        return fidelity(random_correction_strategy(closed_form_rho(msg, OutcomeClass.MINUS), rng), msg.state())

    rows.append(_avg_row("random_correction", OutcomeClass.MINUS.value, bloch_average(corrected, quad), 2 / 3, quad))
    return rows


def _simulated_average_rows(scenario: Scenario) -> list[dict]:
    policy = scenario.policy
    if policy.k == 0:
        policy = CooperationPolicy.withholding(scenario.n, [scenario.n])
    rows = []
    for outcome in (BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS):
        cls = OutcomeClass.of(outcome)
        value = bloch_average(
            lambda t, p: fidelity_record(t, p, outcome, scenario.n, policy).fidelity_sim, scenario.quad
        )
        rows.append(_avg_row("simulated", cls.value, value, ANALYTIC[cls], scenario.quad))
    return rows


def _avg_row(quantity, label, value, analytic, quad) -> dict:
    return {
        "quantity": quantity,
        "case": label,
        "value": f"{value:.15f}",
        "analytic": f"{analytic:.15f}",
        "abs_error": f"{abs(value - analytic):.3e}",
        "nodes": f"{quad.theta_nodes}x{quad.phi_nodes}",
        "scheme": quad.scheme.value,
        "measure": quad.measure.value,
    }


def _fidelity_grid_rows(scenario: Scenario) -> list[dict]:
    policy = scenario.policy
    if policy.k == 0:
        policy = CooperationPolicy.withholding(scenario.n, [scenario.n])
    rows = []
    for msgs in scenario.message_sets:
        msg = msgs[0]
        theta = 2 * math.atan2(abs(msg.beta), abs(msg.alpha))
        phi = (np.angle(msg.beta) - np.angle(msg.alpha)) % (2 * math.pi) if abs(msg.beta) > 0 else 0.0
        for outcome in BELL_OUTCOMES:
            rec = fidelity_record(theta, float(phi), outcome, scenario.n, policy)
            if rec.delta > ATOL:
                raise InvariantError("fidelity_formula", f"theta={theta} phi={phi} {outcome}: {rec.delta:.3e}")
            rows.append({"bell_outcome": outcome.value, **rec.row()})
    return rows


@dataclass
class Report:
    files: dict
    metrics: dict


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def evaluate(scenario: Scenario, workers: int = 1) -> Report:
    files = {}
    metrics = {}
    configs = scenario.configs()
    k = scenario.policy.k
    header = [
        "controlled-teleport report",
        f"version: {__version__}",
        f"config_sha256: {scenario.config_sha256}",
        f"seed: {scenario.seed}",
        f"m: {scenario.m}  n: {scenario.n}  k: {k}  withheld: {list(scenario.policy.withheld)}",
        f"mode: {scenario.mode.value}  variant: {scenario.variant.value}  "
        f"strategy: {configs[0].strategy.value}",
        f"message sets: {len(configs)}",
    ]
    lines = list(header)

    if "protocol" in scenario.analyses:
        jobs = list(enumerate(configs))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(evaluate_config, jobs))
        else:
            results = [evaluate_config(job) for job in jobs]
        rows = [row for r in results for row in r.rows]
        columns = BRANCH_COLUMNS + _fid_columns(scenario.m)
        name = "branches.csv" if scenario.mode is Mode.EXACT else "trajectories.csv"
        if scenario.mode is Mode.SAMPLED:
            columns[1] = "trajectory"
            for row in rows:
                row["trajectory"] = row.pop("branch")
        files[name] = _csv(rows, columns)
        all_f = [f for r in results for fs in r.fidelities for f in fs]
        weighted = [
            w * f / scenario.m for r in results for w, fs in zip(r.weights, r.fidelities) for f in fs
        ]
        metrics["min_fidelity"] = min(all_f)
        metrics["mean_fidelity"] = math.fsum(weighted) / len(configs)
        lines += ["", "[protocol]", f"{name.split('.')[0]}: {len(rows)}"]
        lines.append(f"min_fidelity: {metrics['min_fidelity']:.12f}")
        lines.append(f"mean_fidelity: {metrics['mean_fidelity']:.12f}")
        if scenario.mode is Mode.EXACT:
            density = [rec for r in results for rec in r.density]
            files["density.json"] = json.dumps(
                {
                    "schema_version": SCHEMA_VERSION,
                    "config_sha256": scenario.config_sha256,
                    "seed": scenario.seed,
                    "records": density,
                },
                indent=1,
                sort_keys=True,
            ) + "\n"
            diag = [rec["rho"][d][d][0] for rec in density for d in (0, 1) if rec["kind"] == "uncorrected"]
            if diag:
                metrics["max_diag_deviation"] = max(abs(x - 0.5) for x in diag)
                metrics["max_closed_form_delta"] = max(rec["max_abs_delta"] for rec in density)
                lines.append(f"reported operators: {len(density)}")
                lines.append(f"diagonal range: [{min(diag):.12f}, {max(diag):.12f}]")
                lines.append(f"max |rho_sim - rho_closed_form|: {metrics['max_closed_form_delta']:.3e}")
        else:
            metrics["max_z"] = max(r.max_z for r in results)
            metrics["max_freq_error"] = max(r.max_freq_error for r in results)
            metrics["max_sigma"] = max(r.max_sigma for r in results)
            lines.append(f"max |freq - p|: {metrics['max_freq_error']:.6e}")
            lines.append(f"max binomial sigma: {metrics['max_sigma']:.6e}")
            lines.append(f"max z-score: {metrics['max_z']:.4f}")

    avg_rows = []
    if "average_fidelity" in scenario.analyses:
        avg_rows += _average_rows(scenario)
    if "simulated_average" in scenario.analyses:
        avg_rows += _simulated_average_rows(scenario)
    if avg_rows:
        files["averages.csv"] = _csv(avg_rows, list(avg_rows[0]))
        lines += ["", "[average_fidelity]", f"{'quantity':<20} {'case':<10} value"]
        for row in avg_rows:
            case = {"plus": "PlusClass", "minus": "MinusClass"}.get(row["case"], row["case"])
            lines.append(f"{row['quantity']:<20} {case:<10} {float(row['value']):.6f}")
            metrics[f"avg_{row['quantity']}_{row['case']}"] = float(row["value"])
            metrics[f"err_{row['quantity']}_{row['case']}"] = float(row["abs_error"])

    if "fidelity_grid" in scenario.analyses:
        grid = _fidelity_grid_rows(scenario)
        files["fidelity.csv"] = _csv(grid, list(grid[0]))
        metrics["max_fidelity_delta"] = max(float(r["abs_delta"]) for r in grid)
        lines += ["", "[fidelity_grid]", f"records: {len(grid)}",
                  f"max |F_sim - F_closed_form|: {metrics['max_fidelity_delta']:.3e}"]

    files["summary.txt"] = "\n".join(lines) + "\n"
    return Report(files, metrics)


def write_report(report: Report, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(report.files.items()):
        (out / name).write_text(text, encoding="utf-8")
