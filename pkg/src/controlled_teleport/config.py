"""Scenario files: JSON documents describing one or many protocol runs.

Complex numbers are ``[re, im]`` pairs and angles are radians. A minimal file::

    {"m": 1, "n": 2, "messages": {"random": {"count": 20, "seed": 7}}}
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import Measure, QuadratureSpec, Scheme
from .errors import ConfigurationError
from .protocol import (
    MAX_QUBITS,
    CooperationPolicy,
    MessageState,
    Mode,
    ScenarioConfig,
    Strategy,
    Variant,
)

ANALYSES = ("protocol", "average_fidelity", "simulated_average", "fidelity_grid")


class ConfigFieldError(ConfigurationError):
    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"line {line}" if line is not None else f"field '{path}'"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario file: shared settings plus one or more message tuples."""

    m: int
    n: int
    message_sets: tuple
    policy: CooperationPolicy
    mode: Mode
    trajectories: int
    variant: Variant
    strategy: Strategy | None
    seed: int
    withheld_measure: bool
    quad: QuadratureSpec
    analyses: tuple
    config_sha256: str
    raw: dict

    def configs(self) -> list[ScenarioConfig]:
        return [
            ScenarioConfig(
                self.m,
                self.n,
                msgs,
                policy=self.policy,
                mode=self.mode,
                trajectories=self.trajectories,
                variant=self.variant,
                strategy=self.strategy,
                seed=self.seed,
                withheld_measure=self.withheld_measure,
            )
            for msgs in self.message_sets
        ]

    def with_overrides(self, seed: int | None = None, mode: str | None = None) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if mode is not None:
            raw["mode"] = mode
        return replace(parse_scenario(raw), config_sha256=self.config_sha256)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_bytes()
    try:
        data = json.loads(text.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigFieldError("", exc.msg, line=exc.lineno) from exc
    scenario = parse_scenario(data)
    return replace(scenario, config_sha256=hashlib.sha256(text).hexdigest())


def _get(data: dict, key: str, kind, default=None, path: str = ""):
    value = data.get(key, default)
    full = f"{path}{key}"
    if value is None:
        raise ConfigFieldError(full, "is required")
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigFieldError(full, f"expected an integer, got {value!r}")
    if kind is bool and not isinstance(value, bool):
        raise ConfigFieldError(full, f"expected true/false, got {value!r}")
    return value


def _complex(value, path: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigFieldError(path, f"expected [re, im], got {value!r}")


def _message(entry, path: str) -> MessageState:
    if not isinstance(entry, dict):
        raise ConfigFieldError(path, "expected {alpha, beta} or {theta, phi}")
    try:
        if "theta" in entry:
            return MessageState.from_angles(float(entry["theta"]), float(entry.get("phi", 0.0)))
        return MessageState.normalized(
            _complex(entry.get("alpha"), path + ".alpha"), _complex(entry.get("beta"), path + ".beta")
        )
    except ConfigFieldError:
        raise
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigFieldError(path, str(exc)) from exc


def _message_sets(given, m: int) -> tuple:
    if isinstance(given, list):
        sets = []
        for j, entry in enumerate(given):
            tup = entry if isinstance(entry, list) else [entry]
            if len(tup) != m:
                raise ConfigFieldError(f"messages[{j}]", f"expected {m} message states, got {len(tup)}")
            sets.append(tuple(_message(e, f"messages[{j}][{q}]") for q, e in enumerate(tup)))
        if not sets:
            raise ConfigFieldError("messages", "no message states given")
        return tuple(sets)
    if isinstance(given, dict) and "grid" in given:
        grid = given["grid"]
        nt = _get(grid, "theta", int, path="messages.grid.")
        npz = _get(grid, "phi", int, 1, path="messages.grid.")
        if nt < 1 or npz < 1:
            raise ConfigFieldError("messages.grid", "grid counts must be positive")
        thetas = [math.pi * j / (nt - 1) for j in range(nt)] if nt > 1 else [math.pi / 2]
        phis = [2 * math.pi * j / npz for j in range(npz)]
        return tuple(
            (MessageState.from_angles(t, p),) * m for t in thetas for p in phis
        )
    if isinstance(given, dict) and "random" in given:
        rand = given["random"]
        count = _get(rand, "count", int, path="messages.random.")
        seed = _get(rand, "seed", int, 0, path="messages.random.")
        rng = np.random.default_rng(seed)
        return tuple(tuple(MessageState.random(rng) for _ in range(m)) for _ in range(count))
    raise ConfigFieldError("messages", "expected a list, {grid: ...} or {random: ...}")


def _policy(given, n: int) -> CooperationPolicy:
    if given is None:
        return CooperationPolicy.full(n)
    if not isinstance(given, dict):
        raise ConfigFieldError("policy", "expected an object")
    try:
        if "cooperating" in given:
            return CooperationPolicy(n, frozenset(given["cooperating"]))
        if "withheld" in given:
            return CooperationPolicy.withholding(n, given["withheld"])
        if "k" in given:
            k = _get(given, "k", int, path="policy.")
            if not 0 <= k <= n:
                raise ConfigFieldError("policy.k", f"k={k} outside 0..{n}")
            return CooperationPolicy.withholding(n, range(n - k + 1, n + 1))
    except ConfigFieldError:
        raise
    except (ConfigurationError, TypeError) as exc:
        raise ConfigFieldError("policy", str(exc)) from exc
    raise ConfigFieldError("policy", "expected one of cooperating, withheld, k")


def _enum(enum_cls, value, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigFieldError(path, f"{value!r} is not one of {choices}") from None


def parse_scenario(data: Any) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigFieldError("", "top level must be an object")
    m = _get(data, "m", int)
    n = _get(data, "n", int)
    if m < 1 or n < 1 or 3 * m + n + 1 > MAX_QUBITS:
        raise ConfigFieldError("m", f"need m >= 1, n >= 1 and 3m + n + 1 <= {MAX_QUBITS}")
    quad_raw = data.get("quad", {})
    try:
        quad = QuadratureSpec(
            _get(quad_raw, "theta_nodes", int, 64, path="quad."),
            _get(quad_raw, "phi_nodes", int, 64, path="quad."),
            _enum(Scheme, quad_raw.get("scheme", "gauss_legendre"), "quad.scheme"),
            _enum(Measure, quad_raw.get("measure", "haar"), "quad.measure"),
        )
    except ConfigFieldError:
        raise
    except ConfigurationError as exc:
        raise ConfigFieldError("quad", str(exc)) from exc
    analyses = tuple(data.get("analyses", ["protocol"]))
    for a in analyses:
        if a not in ANALYSES:
            raise ConfigFieldError("analyses", f"unknown analysis {a!r}; choose from {', '.join(ANALYSES)}")
    strategy = data.get("strategy")
    scenario = Scenario(
        m=m,
        n=n,
        message_sets=_message_sets(data.get("messages"), m),
        policy=_policy(data.get("policy"), n),
        mode=_enum(Mode, data.get("mode", "exact"), "mode"),
        trajectories=_get(data, "trajectories", int, 1),
        variant=_enum(Variant, data.get("variant", "hadamard_then_z"), "variant"),
        strategy=None if strategy is None else _enum(Strategy, strategy, "strategy"),
        seed=_get(data, "seed", int, 0),
        withheld_measure=_get(data, "withheld_measure", bool, False),
        quad=quad,
        analyses=analyses,
        config_sha256=hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest(),
        raw=data,
    )
    if not 0 <= scenario.seed < 2**64:
        raise ConfigFieldError("seed", "must be an unsigned 64-bit integer")
    if scenario.mode is Mode.SAMPLED and scenario.trajectories < 1:
        raise ConfigFieldError("trajectories", "sampled mode needs at least one trajectory")
    try:
        scenario.configs()[0]
    except ConfigurationError as exc:
        raise ConfigFieldError("strategy", str(exc)) from exc
    return scenario
