"""Controlled teleportation of m message qubits under the control of n agents.

Register layout (global qubit indices)::

    [ messages 1..m | sender EPR 1'..m' | receiver EPR 1''..m'' | agent GHZ 1..n | a ]

Alice holds the messages, the sender EPR halves and GHZ qubit ``a``; Bob holds the
receiver halves; agent ``l`` holds GHZ qubit ``l``.
"""

from __future__ import annotations

import cmath
import enum
import functools
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .measurement import (
    BellOutcome,
    BranchSampler,
    Basis,
    MeasurementPlan,
    MeasurementStep,
    iter_residual_branches,
    residual_state,
    sample_branch,
    trajectory_rng,
)
from .qstate import (
    ATOL,
    H,
    I,
    X,
    Y,
    Z,
    DensityOperator,
    PureState,
    QubitId,
    Role,
    SingleQubitGate,
    apply_gate,
    fidelity,
    partial_trace,
    product_state,
    tensor,
)

MAX_QUBITS = 20


@dataclass(frozen=True)
class Layout:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ConfigurationError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")

    @property
    def size(self) -> int:
        return 3 * self.m + self.n + 1

    def message(self, i: int) -> QubitId:
        return QubitId(self._check(i, self.m) - 1, Role.MESSAGE, i)

    def sender(self, i: int) -> QubitId:
        return QubitId(self.m + self._check(i, self.m) - 1, Role.EPR_SENDER, i)

    def receiver(self, i: int) -> QubitId:
        return QubitId(2 * self.m + self._check(i, self.m) - 1, Role.EPR_RECEIVER, i)

    def agent(self, l: int) -> QubitId:
        return QubitId(3 * self.m + self._check(l, self.n) - 1, Role.AGENT_GHZ, l)

    @property
    def alice(self) -> QubitId:
        return QubitId(3 * self.m + self.n, Role.ALICE_GHZ, 0)

    @property
    def messages(self) -> tuple[QubitId, ...]:
        return tuple(self.message(i) for i in range(1, self.m + 1))

    @property
    def receivers(self) -> tuple[QubitId, ...]:
        return tuple(self.receiver(i) for i in range(1, self.m + 1))

    @property
    def channel_register(self) -> tuple[QubitId, ...]:
        return (
            tuple(self.sender(i) for i in range(1, self.m + 1))
            + self.receivers
            + tuple(self.agent(l) for l in range(1, self.n + 1))
            + (self.alice,)
        )

    @property
    def register(self) -> tuple[QubitId, ...]:
        return self.messages + self.channel_register

    @staticmethod
    def _check(k: int, top: int) -> int:
        if not 1 <= k <= top:
            raise ConfigurationError(f"label {k} outside 1..{top}")
        return k


@dataclass(frozen=True)
class MessageState:
    """``alpha|0> + beta|1>``; ``from_angles`` uses ``cos(t/2)|0> + e^{i p} sin(t/2)|1>``."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        alpha, beta = complex(self.alpha), complex(self.beta)
        norm2 = abs(alpha) ** 2 + abs(beta) ** 2
        if abs(norm2 - 1.0) > ATOL:
            raise ConfigurationError(f"|alpha|^2 + |beta|^2 = {norm2!r}, expected 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def normalized(cls, alpha: complex, beta: complex) -> "MessageState":
        norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        if norm == 0:
            raise ConfigurationError("message amplitudes are both zero")
        return cls(alpha / norm, beta / norm)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "MessageState":
        if not 0.0 <= theta <= math.pi:
            raise ConfigurationError(f"theta={theta} outside [0, pi]")
        if not 0.0 <= phi < 2 * math.pi:
            raise ConfigurationError(f"phi={phi} outside [0, 2pi)")
        return cls(math.cos(theta / 2), cmath.exp(1j * phi) * math.sin(theta / 2))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "MessageState":
        """Haar-random single-qubit state."""
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        return cls.normalized(z[0], z[1])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=np.complex128)

    def state(self, qubit: QubitId | None = None) -> PureState:
        return product_state([self.vector], None if qubit is None else (qubit,))

    @property
    def coherence(self) -> complex:
        """``alpha beta* - alpha* beta``, the only message dependence of Bob's mixed state."""
        return self.alpha * self.beta.conjugate() - self.alpha.conjugate() * self.beta


@dataclass(frozen=True)
class CooperationPolicy:
    n: int
    cooperating: frozenset

    def __post_init__(self):
        cooperating = frozenset(int(l) for l in self.cooperating)
        if not cooperating <= set(range(1, self.n + 1)):
            raise ConfigurationError(f"cooperating agents {sorted(cooperating)} outside 1..{self.n}")
        object.__setattr__(self, "cooperating", cooperating)

    @classmethod
    def full(cls, n: int) -> "CooperationPolicy":
        return cls(n, frozenset(range(1, n + 1)))

    @classmethod
    def withholding(cls, n: int, withheld: Iterable[int]) -> "CooperationPolicy":
        withheld = {int(l) for l in withheld}
        if not withheld <= set(range(1, n + 1)):
            raise ConfigurationError(f"withheld agents {sorted(withheld)} outside 1..{n}")
        return cls(n, frozenset(l for l in range(1, n + 1) if l not in withheld))

    @property
    def withheld(self) -> tuple[int, ...]:
        return tuple(l for l in range(1, self.n + 1) if l not in self.cooperating)

    @property
    def k(self) -> int:
        return self.n - len(self.cooperating)


class Variant(enum.Enum):
    HADAMARD_THEN_Z = "hadamard_then_z"
    DIRECT_X_BASIS = "direct_x_basis"


class Strategy(enum.Enum):
    FULL_CORRECTION = "full_correction"
    ASSUME_PSI = "assume_psi"
    NO_CORRECTION = "no_correction"


class Mode(enum.Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


class BranchLabel(enum.Enum):
    PSI = "psi"
    PSI_PRIME = "psi'"


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a protocol run; ``strategy=None`` picks the default.

    The default is full correction when every agent cooperates and the
    assume-psi correction otherwise. ``withheld_measure`` makes withheld agents
    measure their qubits without reporting instead of leaving them untouched.
    """

    m: int
    n: int
    messages: tuple
    policy: CooperationPolicy | None = None
    mode: Mode = Mode.EXACT
    trajectories: int = 1
    variant: Variant = Variant.HADAMARD_THEN_Z
    strategy: Strategy | None = None
    seed: int = 0
    withheld_measure: bool = False
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        layout = Layout(self.m, self.n)
        if layout.size > self.max_qubits:
            raise ConfigurationError(f"3m + n + 1 = {layout.size} exceeds {self.max_qubits} qubits")
        messages = tuple(self.messages)
        if len(messages) != self.m:
            raise ConfigurationError(f"{len(messages)} messages for m={self.m}")
        if not all(isinstance(msg, MessageState) for msg in messages):
            raise ConfigurationError("messages must be MessageState values")
        policy = self.policy or CooperationPolicy.full(self.n)
        if policy.n != self.n:
            raise ConfigurationError(f"policy is for n={policy.n}, scenario has n={self.n}")
        strategy = self.strategy
        if strategy is None:
            strategy = Strategy.FULL_CORRECTION if policy.k == 0 else Strategy.ASSUME_PSI
        if strategy is Strategy.FULL_CORRECTION and policy.k > 0:
            raise ConfigurationError("full correction needs every agent's bit; some agents withhold")
        if self.mode is Mode.SAMPLED and self.trajectories < 1:
            raise ConfigurationError("sampled mode needs at least one trajectory")
        object.__setattr__(self, "messages", messages)
        object.__setattr__(self, "policy", policy)
        object.__setattr__(self, "strategy", strategy)

    @property
    def layout(self) -> Layout:
        return Layout(self.m, self.n)

    def message_product(self) -> PureState:
        return product_state([msg.vector for msg in self.messages], self.layout.receivers)


@dataclass(frozen=True)
class Transcript:
    """Classical record Bob receives. ``agent_bits`` maps agent label to bit."""

    bell_outcomes: tuple
    agent_bits: dict
    alice_ghz_bit: int
    variant: Variant

    def key(self) -> tuple:
        return (self.bell_outcomes, tuple(sorted(self.agent_bits.items())), self.alice_ghz_bit)

    def to_dict(self) -> dict:
        return {
            "bell_outcomes": [b.value for b in self.bell_outcomes],
            "agent_bits": {str(l): int(b) for l, b in sorted(self.agent_bits.items())},
            "alice_ghz_bit": int(self.alice_ghz_bit),
            "variant": self.variant.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        return cls(
            tuple(BellOutcome.parse(b) for b in data["bell_outcomes"]),
            {int(l): int(b) for l, b in data["agent_bits"].items()},
            int(data["alice_ghz_bit"]),
            Variant(data["variant"]),
        )

    def label(self) -> str:
        bits = "".join(str(b) for _, b in sorted(self.agent_bits.items()))
        return f"bell={'/'.join(b.value for b in self.bell_outcomes)};agents={bits or '-'};a={self.alice_ghz_bit}"


def prepare_channel_state(m: int, n: int, max_qubits: int = MAX_QUBITS) -> PureState:
    """Normalized EPR-GHZ channel over ``[1'..m' | 1''..m'' | agents | a]``.

    Built by direct amplitude assignment: ``prod |00>+|11>`` with ``|GHZ+>`` plus
    ``prod |01>-|10>`` with ``|GHZ->``.
    """
    layout = Layout(m, n)
    if layout.size > max_qubits:
        raise ConfigurationError(f"3m + n + 1 = {layout.size} exceeds {max_qubits} qubits")
    psi = np.zeros((2,) * (2 * m + n + 1), dtype=np.complex128)
    ghz0 = (0,) * (n + 1)
    ghz1 = (1,) * (n + 1)
    for s in np.ndindex(*(2,) * m):
        psi[s + s + ghz0] += 1
        psi[s + s + ghz1] += 1
        flipped = tuple(1 - b for b in s)
        sign = (-1) ** sum(s)
        psi[s + flipped + ghz0] += sign
        psi[s + flipped + ghz1] -= sign
    return PureState.normalized(psi, layout.channel_register)


def compose_with_messages(messages: Sequence[MessageState], channel: PureState) -> PureState:
    m = (channel.num_qubits - 1 - _agent_count(channel)) // 2
    if len(messages) != m:
        raise ConfigurationError(f"{len(messages)} messages for a channel carrying m={m}")
    layout = Layout(m, _agent_count(channel))
    return tensor(product_state([msg.vector for msg in messages], layout.messages), channel)


def _agent_count(channel: PureState) -> int:
    return sum(q.role is Role.AGENT_GHZ for q in channel.register)


def parity_branch(agent_bits: Sequence[int], alice_bit: int) -> BranchLabel:
    """Which of Bob's two conditional states the GHZ outcomes select."""
    odd = sum(int(b) for b in agent_bits) % 2
    return BranchLabel.PSI if odd == int(alice_bit) else BranchLabel.PSI_PRIME


_CORRECTIONS = {
    (BellOutcome.PHI_PLUS, BranchLabel.PSI): I,
    (BellOutcome.PHI_MINUS, BranchLabel.PSI): Z,
    (BellOutcome.PSI_PLUS, BranchLabel.PSI): X,
    (BellOutcome.PSI_MINUS, BranchLabel.PSI): Y,
    (BellOutcome.PHI_PLUS, BranchLabel.PSI_PRIME): Y,
    (BellOutcome.PHI_MINUS, BranchLabel.PSI_PRIME): X,
    (BellOutcome.PSI_PLUS, BranchLabel.PSI_PRIME): Z,
    (BellOutcome.PSI_MINUS, BranchLabel.PSI_PRIME): I,
}


def correction_for(outcome: BellOutcome, branch: BranchLabel) -> SingleQubitGate:
    """Pauli restoring Bob's qubit to the message, up to a global phase."""
    return _CORRECTIONS[outcome, branch]


def conditional_receiver_states(message: MessageState, outcome: BellOutcome) -> dict:
    """Bob's two possible qubit states after Alice reports ``outcome`` for this pair.

    Transcribed amplitude-for-amplitude from the hand expansion of the composite
    state in the Bell basis; used as an oracle, not by the simulator.
    """
    a, b = message.alpha, message.beta
    table = {
        BellOutcome.PHI_PLUS: ((a, b), (-b, a)),
        BellOutcome.PHI_MINUS: ((a, -b), (b, a)),
        BellOutcome.PSI_PLUS: ((b, a), (-a, b)),
        BellOutcome.PSI_MINUS: ((-b, a), (-a, -b)),
    }
    psi, psi_prime = table[outcome]
    return {
        BranchLabel.PSI: np.array(psi, dtype=np.complex128),
        BranchLabel.PSI_PRIME: np.array(psi_prime, dtype=np.complex128),
    }


# Protocol actions: ("bell", i), ("agent", l), ("alice", 0).
Action = tuple


def default_order(config: ScenarioConfig) -> list[Action]:
    agents = config.policy.cooperating if not config.withheld_measure else range(1, config.n + 1)
    return (
        [("bell", i) for i in range(1, config.m + 1)]
        + [("agent", l) for l in sorted(agents)]
        + [("alice", 0)]
    )


def build_plan(config: ScenarioConfig, order: Sequence[Action] | None = None) -> tuple[MeasurementPlan, list[Action]]:
    """Measurement plan for the parties' actions in the given order."""
    layout = config.layout
    expected = default_order(config)
    order = list(expected if order is None else order)
    if sorted(order) != sorted(expected):
        raise ConfigurationError(f"order {order} is not a permutation of {expected}")
    steps = []
    for kind, idx in order:
        if kind == "bell":
            steps.append(MeasurementStep(Basis.BELL_PAIR, (layout.message(idx), layout.sender(idx))))
        elif kind == "agent" and config.variant is Variant.DIRECT_X_BASIS:
            steps.append(MeasurementStep(Basis.X_BASIS, (layout.agent(idx),)))
        elif kind == "agent":
            steps.append(MeasurementStep(Basis.COMPUTATIONAL, (layout.agent(idx),), prepare=H))
        else:
            steps.append(MeasurementStep(Basis.COMPUTATIONAL, (layout.alice,), prepare=H))
    return MeasurementPlan(tuple(steps)), order


@dataclass(frozen=True, eq=False)
class ProtocolBranch:
    """One outcome combination of a run, seen from Bob's side.

    ``state`` covers Bob's qubits plus any withheld agent qubits left unmeasured,
    after Bob's corrections. ``hidden_bits`` are outcomes of withheld agents that
    measured but did not report.
    """

    transcript: Transcript
    probability: float
    state: PureState
    corrections: tuple
    label: BranchLabel | None
    outcomes: tuple
    hidden_bits: dict = field(default_factory=dict)

    def receiver_density(self) -> DensityOperator:
        bob = [q for q in self.state.register if q.role is Role.EPR_RECEIVER]
        return partial_trace(self.state, bob)

    def qubit_density(self, i: int) -> DensityOperator:
        target = [q for q in self.state.register if q.role is Role.EPR_RECEIVER and q.label == i]
        return partial_trace(self.state, target)

    def receiver_state(self) -> PureState:
        """Bob's pure state; only defined when nothing else is entangled with it."""
        if any(q.role is not Role.EPR_RECEIVER for q in self.state.register):
            raise ConfigurationError("Bob's qubits are entangled with withheld agents")
        return self.state

    def fidelities(self, messages: Sequence[MessageState]) -> tuple[float, ...]:
        return tuple(
            fidelity(self.qubit_density(i), _target(msg)) for i, msg in enumerate(messages, start=1)
        )


@functools.lru_cache(maxsize=256)
def _target(message: MessageState) -> PureState:
    return message.state()


def _bit(outcome) -> int:
    return {0: 0, 1: 1, "+": 0, "-": 1}[outcome]


def _finish(config: ScenarioConfig, order, outcomes, probability, state: PureState) -> ProtocolBranch:
    """Assemble Bob's view of one branch; ``state`` excludes every measured qubit."""
    layout = config.layout
    bell = {}
    agent_bits = {}
    hidden = {}
    alice_bit = None
    for (kind, idx), outcome in zip(order, outcomes):
        if kind == "bell":
            bell[idx] = outcome
        elif kind == "agent" and idx in config.policy.cooperating:
            agent_bits[idx] = _bit(outcome)
        elif kind == "agent":
            hidden[idx] = _bit(outcome)
        else:
            alice_bit = _bit(outcome)
    bell_outcomes = tuple(bell[i] for i in range(1, config.m + 1))
    transcript = Transcript(bell_outcomes, agent_bits, alice_bit, config.variant)

    if config.strategy is Strategy.FULL_CORRECTION:
        label = parity_branch([agent_bits[l] for l in sorted(agent_bits)], alice_bit)
    elif config.strategy is Strategy.ASSUME_PSI:
        label = BranchLabel.PSI
    else:
        label = None
    corrections = ()
    if label is not None:
        gates = [correction_for(b, label) for b in bell_outcomes]
        for i, gate in enumerate(gates, start=1):
            state = apply_gate(state, gate, layout.receiver(i))
        corrections = tuple(g.name for g in gates)
    return ProtocolBranch(transcript, probability, state, corrections, label, tuple(outcomes), hidden)


def initial_state(config: ScenarioConfig) -> PureState:
    return compose_with_messages(
        config.messages, prepare_channel_state(config.m, config.n, config.max_qubits)
    )


def iter_protocol_branches(
    config: ScenarioConfig,
    order: Sequence[Action] | None = None,
    bell_outcomes: Sequence[BellOutcome] | None = None,
):
    """Exact enumeration, optionally postselected on Alice's Bell outcomes.

    With ``bell_outcomes`` given, branch probabilities stay joint probabilities,
    so they sum to the probability of that Bell record rather than to one.
    """
    plan, order = build_plan(config, order)
    fixed = {}
    if bell_outcomes is not None:
        if len(bell_outcomes) != config.m:
            raise ConfigurationError(f"{len(bell_outcomes)} Bell outcomes for m={config.m}")
        fixed = {pos: bell_outcomes[idx - 1] for pos, (kind, idx) in enumerate(order) if kind == "bell"}
    for branch in iter_residual_branches(initial_state(config), plan, fixed):
        yield _finish(config, order, branch.outcomes, branch.probability, branch.state)


def sample_protocol(config: ScenarioConfig, rng: np.random.Generator, order: Sequence[Action] | None = None) -> ProtocolBranch:
    plan, order = build_plan(config, order)
    branch = sample_branch(initial_state(config), plan, rng)
    state = residual_state(branch.state, plan, branch.outcomes)
    return _finish(config, order, branch.outcomes, branch.probability, state)


def run_protocol(
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    order: Sequence[Action] | None = None,
) -> list[ProtocolBranch]:
    """Run the protocol: every branch in exact mode, one trajectory in sampled mode.

    In sampled mode without an explicit ``rng`` the trajectory stream is
    ``trajectory_rng(config.seed, 0)``.
    """
    if config.mode is Mode.EXACT:
        return list(iter_protocol_branches(config, order))
    if rng is None:
        rng = trajectory_rng(config.seed, 0)
    return [sample_protocol(config, rng, order)]


def sample_trajectories(config: ScenarioConfig, count: int | None = None) -> list[ProtocolBranch]:
    """``count`` independent trajectories, trajectory ``t`` drawn from stream ``(seed, t)``."""
    count = config.trajectories if count is None else count
    plan, order = build_plan(config)
    sampler = BranchSampler(initial_state(config), plan)
    finished: dict[tuple, ProtocolBranch] = {}
    out = []
    for t in range(count):
        branch = sampler.sample(trajectory_rng(config.seed, t))
        if branch.outcomes not in finished:
            state = residual_state(branch.state, plan, branch.outcomes)
            finished[branch.outcomes] = _finish(config, order, branch.outcomes, branch.probability, state)
        out.append(finished[branch.outcomes])
    return out


def receiver_densities(branches: Iterable[ProtocolBranch]) -> dict:
    """Bob's density operator conditioned on each transcript he can receive.

    Branches sharing a transcript (differing only in unreported outcomes) are
    mixed with their relative Born weights; withheld qubits are traced out.
    Returns ``{transcript_key: (probability, DensityOperator)}``.
    """
    groups = defaultdict(list)
    for br in branches:
        groups[br.transcript.key()].append(br)
    out = {}
    for key, members in groups.items():
        total = math.fsum(b.probability for b in members)
        rho = np.zeros_like(members[0].receiver_density().matrix)
        for b in members:
            rho += (b.probability / total) * b.receiver_density().matrix
        out[key] = (total, DensityOperator(rho, members[0].receiver_density().subsystem))
    return out


def _comparable(branches: Iterable[ProtocolBranch]) -> dict:
    return {(br.transcript.key(), tuple(sorted(br.hidden_bits.items()))): br for br in branches}


def variant_equivalence_check(config: ScenarioConfig, atol: float = ATOL) -> bool:
    """True when both agent-measurement variants agree branch for branch.

    Outcomes are identified as ``+ <-> 0`` and ``- <-> 1``; post-correction states
    are compared up to global phase.
    """
    left = _comparable(run_protocol(replace(config, variant=Variant.HADAMARD_THEN_Z, mode=Mode.EXACT)))
    right = _comparable(run_protocol(replace(config, variant=Variant.DIRECT_X_BASIS, mode=Mode.EXACT)))
    if left.keys() != right.keys():
        return False
    for key, a in left.items():
        b = right[key]
        if abs(a.probability - b.probability) > atol:
            return False
        if not a.state.equals_up_to_phase(b.state, atol):
            return False
    return True

