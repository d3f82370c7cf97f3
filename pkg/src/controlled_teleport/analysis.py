"""What Bob can learn when agents withhold: reduced states, fidelities, averages."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError
from .measurement import BellOutcome
from .protocol import (
    CooperationPolicy,
    MessageState,
    Mode,
    ScenarioConfig,
    Strategy,
    iter_protocol_branches,
    receiver_densities,
)
from .qstate import X, Z, DensityOperator, fidelity, generic_register, partial_trace


class OutcomeClass(enum.Enum):
    """Bell outcomes grouped by the form of Bob's uncorrected reduced state."""

    PLUS = "plus"
    MINUS = "minus"

    @classmethod
    def of(cls, outcome: BellOutcome) -> "OutcomeClass":
        if outcome in (BellOutcome.PHI_PLUS, BellOutcome.PSI_MINUS):
            return cls.PLUS
        return cls.MINUS


class Scheme(enum.Enum):
    GAUSS_LEGENDRE = "gauss_legendre"
    TRAPEZOID = "trapezoid"


class Measure(enum.Enum):
    HAAR = "haar"
    UNIFORM_ANGLES = "uniform_angles"


@dataclass(frozen=True)
class QuadratureSpec:
    theta_nodes: int = 64
    phi_nodes: int = 64
    scheme: Scheme = Scheme.GAUSS_LEGENDRE
    measure: Measure = Measure.HAAR

    def __post_init__(self):
        if self.theta_nodes < 8 or self.phi_nodes < 8:
            raise ConfigurationError("quadrature needs at least 8 nodes per axis")
        if self.measure is Measure.UNIFORM_ANGLES:
            warnings.warn(
                "uniform-in-angle averaging is not the Bloch-sphere average; "
                "fidelities will not match the Haar values",
                stacklevel=3,
            )


class PriorCase(enum.Enum):
    DIRECT = "direct"
    FLIPPED = "flipped"


def bob_reduced_density(
    config: ScenarioConfig,
    policy: CooperationPolicy,
    bell_outcomes: Sequence[BellOutcome],
    target: int,
) -> DensityOperator:
    """Bob's uncorrected qubit ``target`` given Alice's Bell record, some agents withholding.

    Mixes over every outcome of the cooperating parties with its Born weight
    and traces out the withheld GHZ qubits and Bob's other qubits.
    """
    if policy.k == 0:
        raise ConfigurationError("every agent cooperates; use run_protocol for the corrected state")
    config = replace(config, policy=policy, strategy=Strategy.NO_CORRECTION, mode=Mode.EXACT)
    total = 0.0
    acc = np.zeros((2, 2), dtype=np.complex128)
    for br in iter_protocol_branches(config, bell_outcomes=bell_outcomes):
        total += br.probability
        acc += br.probability * br.qubit_density(target).matrix
    if total == 0.0:
        raise ConfigurationError(f"Bell record {bell_outcomes} has zero probability")
    return DensityOperator(acc / total, (config.layout.receiver(target),))


def per_transcript_densities(
    config: ScenarioConfig,
    policy: CooperationPolicy,
    bell_outcomes: Sequence[BellOutcome],
    target: int,
) -> list[tuple[float, DensityOperator]]:
    """Bob's uncorrected qubit state for each individual transcript, before mixing."""
    config = replace(config, policy=policy, strategy=Strategy.NO_CORRECTION, mode=Mode.EXACT)
    grouped = receiver_densities(iter_protocol_branches(config, bell_outcomes=bell_outcomes))
    receiver = config.layout.receiver(target)
    return [(p, partial_trace(rho, [receiver])) for _, (p, rho) in sorted(grouped.items(), key=str)]


def closed_form_rho(message: MessageState, outcome_class: OutcomeClass) -> DensityOperator:
    """``(I +/- c|0><1| -/+ c|1><0|) / 2`` with ``c = alpha beta* - alpha* beta``."""
    c = message.coherence
    sign = 1 if outcome_class is OutcomeClass.PLUS else -1
    matrix = 0.5 * np.array([[1, sign * c], [-sign * c, 1]], dtype=np.complex128)
    return DensityOperator(matrix, generic_register(1))


def fidelity_closed_form(theta, phi, outcome_class: OutcomeClass):
    """``(1 +/- sin^2(theta) sin^2(phi)) / 2``; accepts scalars or arrays."""
    sign = 1 if outcome_class is OutcomeClass.PLUS else -1
    return 0.5 * (1 + sign * np.sin(theta) ** 2 * np.sin(phi) ** 2)


def quadrature_grid(quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes ``theta``, ``phi`` (meshed, ij order) and weights summing to the measure's mass 1."""
    if quad.scheme is Scheme.GAUSS_LEGENDRE:
        xt, wt = leggauss(quad.theta_nodes)
        theta, wtheta = (xt + 1) * math.pi / 2, wt * math.pi / 2
        xp, wp = leggauss(quad.phi_nodes)
        phi, wphi = (xp + 1) * math.pi, wp * math.pi
    else:
        theta = np.linspace(0.0, math.pi, quad.theta_nodes)
        wtheta = np.full(quad.theta_nodes, math.pi / (quad.theta_nodes - 1))
        wtheta[[0, -1]] /= 2
        phi = 2 * math.pi * np.arange(quad.phi_nodes) / quad.phi_nodes
        wphi = np.full(quad.phi_nodes, 2 * math.pi / quad.phi_nodes)
    if quad.measure is Measure.HAAR:
        wtheta = wtheta * np.sin(theta) / (4 * math.pi)
    else:
        wtheta = wtheta / (2 * math.pi**2)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    return T, P, np.outer(wtheta, wphi)


def bloch_average(func: Callable[[float, float], float], quad: QuadratureSpec) -> float:
    """Average ``func(theta, phi)`` over the sphere, summed in a fixed order with fsum."""
    T, P, W = quadrature_grid(quad)
    return math.fsum(w * func(t, p) for t, p, w in zip(T.ravel(), P.ravel(), W.ravel()))


def average_fidelity(outcome_class: OutcomeClass, quad: QuadratureSpec | None = None) -> float:
    quad = quad or QuadratureSpec()
    T, P, W = quadrature_grid(quad)
    return math.fsum((W * fidelity_closed_form(T, P, outcome_class)).ravel())


def random_correction_strategy(rho: DensityOperator, rng: np.random.Generator) -> DensityOperator:
    """Conjugate a single-qubit state by X or Z, chosen with equal odds.

    This is Bob's best guess when he knows the outcome class but not which of
    the two flips applies; on the minus-class form both choices agree.
    """
    if rho.num_qubits != 1:
        raise ConfigurationError("random correction acts on a single qubit")
    gate = X if rng.random() < 0.5 else Z
    return rho.conjugate_by(gate)


def prior_scheme_rho(message: MessageState, outcome_case: PriorCase) -> DensityOperator:
    """Bob's qubit under the earlier schemes when one agent withholds: phase lost, amplitudes kept."""
    a2, b2 = abs(message.alpha) ** 2, abs(message.beta) ** 2
    diag = (a2, b2) if outcome_case is PriorCase.DIRECT else (b2, a2)
    return DensityOperator(np.diag(np.array(diag, dtype=np.complex128)), generic_register(1))


def prior_scheme_average_fidelity(
    outcome_case: PriorCase, quad: QuadratureSpec | None = None, bob_corrects: bool = True
) -> float:
    """Bloch-averaged fidelity of the earlier schemes' output.

    With ``bob_corrects`` Bob undoes the bit flip he can read off Alice's Bell
    outcome, so both cases average the same.
    """
    quad = quad or QuadratureSpec()

    def f(theta, phi):
        msg = MessageState.from_angles(theta, phi)
        rho = prior_scheme_rho(msg, outcome_case)
        if bob_corrects and outcome_case is PriorCase.FLIPPED:
            rho = rho.conjugate_by(X)
        return fidelity(rho, msg.state())

    return bloch_average(f, quad)


@dataclass(frozen=True)
class FidelityRecord:
    theta: float
    phi: float
    outcome_class: OutcomeClass
    fidelity_sim: float
    fidelity_closed_form: float

    @property
    def delta(self) -> float:
        return abs(self.fidelity_sim - self.fidelity_closed_form)

    def row(self) -> dict:
        return {
            "theta": f"{self.theta:.12g}",
            "phi": f"{self.phi:.12g}",
            "outcome_class": self.outcome_class.value,
            "fidelity_sim": f"{self.fidelity_sim:.15f}",
            "fidelity_closed_form": f"{self.fidelity_closed_form:.15f}",
            "abs_delta": f"{self.delta:.3e}",
        }


def fidelity_record(
    theta: float,
    phi: float,
    outcome: BellOutcome,
    n: int = 2,
    policy: CooperationPolicy | None = None,
) -> FidelityRecord:
    """Simulated versus closed-form fidelity for a single message qubit."""
    policy = policy or CooperationPolicy.withholding(n, [n])
    msg = MessageState.from_angles(theta, phi)
    config = ScenarioConfig(1, n, (msg,), policy=policy, strategy=Strategy.NO_CORRECTION)
    rho = bob_reduced_density(config, policy, [outcome], 1)
    cls = OutcomeClass.of(outcome)
    return FidelityRecord(
        theta, phi, cls, fidelity(rho, msg.state()), float(fidelity_closed_form(theta, phi, cls))
    )
