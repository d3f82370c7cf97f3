"""Projective measurements with exact branch enumeration or seeded sampling.

Measured qubits stay in the register, projected onto the observed eigenstate, so
that qubit identities never shift. :func:`residual_state` strips them afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, InvariantError
from .qstate import PureState, QubitRef, SingleQubitGate, apply_gate

PRUNE_BELOW = 1e-14

_S = 1 / np.sqrt(2)


class BellOutcome(enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi−"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi−"

    @property
    def vector(self) -> np.ndarray:
        """Normalized amplitudes on the ordered pair, basis ``|00>,|01>,|10>,|11>``."""
        return _BELL_VECTORS[self]

    @classmethod
    def parse(cls, text: str) -> "BellOutcome":
        key = text.strip().lower().replace("-", "−")
        for outcome in cls:
            if outcome.value == key:
                return outcome
        raise ConfigurationError(f"unknown Bell outcome {text!r}")

    def __str__(self) -> str:
        return self.value


_BELL_VECTORS = {
    BellOutcome.PHI_PLUS: np.array([_S, 0, 0, _S], dtype=np.complex128),
    BellOutcome.PHI_MINUS: np.array([_S, 0, 0, -_S], dtype=np.complex128),
    BellOutcome.PSI_PLUS: np.array([0, _S, _S, 0], dtype=np.complex128),
    BellOutcome.PSI_MINUS: np.array([0, _S, -_S, 0], dtype=np.complex128),
}
BELL_OUTCOMES = tuple(BellOutcome)


class Basis(enum.Enum):
    COMPUTATIONAL = "computational"
    X_BASIS = "x"
    BELL_PAIR = "bell"


_EIGENVECTORS: dict[Basis, tuple[tuple[Any, np.ndarray], ...]] = {
    Basis.COMPUTATIONAL: (
        (0, np.array([1, 0], dtype=np.complex128)),
        (1, np.array([0, 1], dtype=np.complex128)),
    ),
    Basis.X_BASIS: (
        ("+", np.array([_S, _S], dtype=np.complex128)),
        ("-", np.array([_S, -_S], dtype=np.complex128)),
    ),
    Basis.BELL_PAIR: tuple((b, b.vector) for b in BELL_OUTCOMES),
}


def bell_projectors() -> list[np.ndarray]:
    return [np.outer(v, v.conj()) for _, v in _EIGENVECTORS[Basis.BELL_PAIR]]


@dataclass(frozen=True)
class MeasurementStep:
    """One projective measurement; ``prepare`` is a local gate applied just before it."""

    basis: Basis
    targets: tuple
    prepare: SingleQubitGate | None = None

    def __post_init__(self):
        targets = tuple(self.targets)
        want = 2 if self.basis is Basis.BELL_PAIR else 1
        if len(targets) != want:
            raise ConfigurationError(f"{self.basis.value} step needs {want} target(s), got {targets}")
        if self.prepare is not None and want != 1:
            raise ConfigurationError("prepare gates are only supported on single-qubit steps")
        object.__setattr__(self, "targets", targets)

    def outcomes(self) -> tuple:
        return tuple(o for o, _ in _EIGENVECTORS[self.basis])


@dataclass(frozen=True)
class MeasurementPlan:
    steps: tuple[MeasurementStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def validate(self, state: PureState) -> None:
        seen: set[int] = set()
        for step in self.steps:
            positions = [state.position(t) for t in step.targets]
            if len(set(positions)) != len(positions):
                raise ConfigurationError(f"Bell pair targets must be distinct: {step.targets}")
            if seen.intersection(positions):
                raise ConfigurationError(f"qubit measured twice in plan: {step.targets}")
            seen.update(positions)


@dataclass(frozen=True, eq=False)
class Branch:
    outcomes: tuple
    probability: float
    state: PureState


def _split(state: PureState, step: MeasurementStep) -> list[tuple[Any, float, np.ndarray]]:
    """Born weight and normalized post-state amplitudes for every outcome of ``step``."""
    if step.prepare is not None:
        state = apply_gate(state, step.prepare, step.targets[0])
    positions = [state.position(t) for t in step.targets]
    if len(set(positions)) != len(positions):
        raise ConfigurationError(f"Bell pair targets must be distinct: {step.targets}")
    n = state.num_qubits
    rest = [p for p in range(n) if p not in positions]
    order = positions + rest
    psi = np.transpose(state.tensor, order).reshape(2 ** len(positions), -1)
    eig = _EIGENVECTORS[step.basis]
    basis = np.array([v for _, v in eig])
    amps = basis.conj() @ psi
    probs = np.einsum("ij,ij->i", amps.conj(), amps).real
    inverse = np.argsort(order)
    results = []
    for (outcome, vec), amp, p in zip(eig, amps, probs):
        if p < PRUNE_BELOW:
            results.append((outcome, float(p), None))
            continue
        post = np.outer(vec, amp / np.sqrt(p)).reshape((2,) * n)
        results.append((outcome, float(p), np.transpose(post, inverse).reshape(-1)))
    return results


def project(state: PureState, step: MeasurementStep, outcome) -> tuple[float, PureState | None]:
    """Probability of ``outcome`` and the renormalized post-state (None if impossible)."""
    for o, p, amps in _split(state, step):
        if o == outcome:
            return p, (None if amps is None else PureState.normalized(amps, state.register))
    raise ConfigurationError(f"{outcome!r} is not an outcome of a {step.basis.value} measurement")


def _choose(results, u: float):
    cumulative = 0.0
    chosen = None
    for outcome, p, amps in results:
        if amps is None:
            continue
        chosen = (outcome, p, amps)
        cumulative += p
        if u < cumulative:
            break
    return chosen


def _sample(state: PureState, step: MeasurementStep, rng: np.random.Generator):
    if abs(np.linalg.norm(state.amplitudes) - 1.0) > 1e-12:
        raise InvariantError("norm", "measured state is not normalized")
    outcome, p, amps = _choose(_split(state, step), rng.random())
    return outcome, p, PureState.normalized(amps, state.register)


def measure_computational(state: PureState, target: QubitRef, rng: np.random.Generator):
    """Born-sample a Z-basis measurement; returns ``(bit, post_state)``."""
    outcome, _, post = _sample(state, MeasurementStep(Basis.COMPUTATIONAL, (target,)), rng)
    return outcome, post


def measure_x_basis(state: PureState, target: QubitRef, rng: np.random.Generator):
    """Born-sample a measurement in ``|+>, |->``; returns ``("+" | "-", post_state)``."""
    outcome, _, post = _sample(state, MeasurementStep(Basis.X_BASIS, (target,)), rng)
    return outcome, post


def measure_bell(state: PureState, pair: Sequence[QubitRef], rng: np.random.Generator):
    """Born-sample a Bell-basis measurement of an ordered pair."""
    outcome, _, post = _sample(state, MeasurementStep(Basis.BELL_PAIR, tuple(pair)), rng)
    return outcome, post


def iter_branches(state: PureState, plan: MeasurementPlan) -> Iterator[Branch]:
    """Yield every nonzero-probability branch, lexicographic in step outcomes.

    Only one post-state per plan depth is alive at a time, so this is usable on
    registers whose full branch list would not fit in memory.
    """
    plan.validate(state)
    steps = plan.steps

    def walk(depth: int, amps: np.ndarray, prob: float, outcomes: tuple):
        if depth == len(steps):
            yield Branch(outcomes, prob, PureState.normalized(amps, state.register))
            return
        current = PureState.normalized(amps, state.register)
        for outcome, p, post in _split(current, steps[depth]):
            if post is None or prob * p < PRUNE_BELOW:
                continue
            yield from walk(depth + 1, post, prob * p, outcomes + (outcome,))

    yield from walk(0, state.amplitudes, 1.0, ())


def _contract(psi: np.ndarray, register: tuple, step: MeasurementStep):
    """Split a raw amplitude tensor by ``step``, dropping the measured axes.

    Yields ``(outcome, p, post)`` where ``post`` is the normalized tensor over the
    remaining register, or None below the pruning threshold.
    """
    positions = [_position_of(register, t) for t in step.targets]
    if step.prepare is not None:
        psi = np.moveaxis(np.tensordot(step.prepare.matrix, psi, axes=([1], [positions[0]])), 0, positions[0])
    rest = [p for p in range(len(register)) if p not in positions]
    flat = np.transpose(psi, positions + rest).reshape(2 ** len(positions), -1)
    shape = (2,) * len(rest)
    for outcome, vec in _EIGENVECTORS[step.basis]:
        amp = vec.conj() @ flat
        p = float(np.vdot(amp, amp).real)
        yield outcome, p, (None if p < PRUNE_BELOW else (amp / np.sqrt(p)).reshape(shape))


def _position_of(register: tuple, target) -> int:
    for pos, q in enumerate(register):
        if q.index == target.index:
            return pos
    raise ConfigurationError(f"qubit {target} is not in register")


def iter_residual_branches(
    state: PureState, plan: MeasurementPlan, fixed: dict | None = None
) -> Iterator[Branch]:
    """Like :func:`iter_branches`, but each branch state holds only unmeasured qubits.

    Measured qubits are contracted away level by level, so deep plans on wide
    registers stay cheap. ``fixed`` maps step positions to a required outcome;
    those steps are postselected and their Born weights still enter
    ``probability``, making it a joint probability.
    """
    plan.validate(state)
    fixed = fixed or {}
    steps = [
        MeasurementStep(s.basis, tuple(state.register[state.position(t)] for t in s.targets), s.prepare)
        for s in plan.steps
    ]

    def walk(depth: int, psi: np.ndarray, register: tuple, prob: float, outcomes: tuple):
        if depth == len(steps):
            yield Branch(outcomes, prob, PureState(psi.reshape(-1), register))
            return
        step = steps[depth]
        remaining = tuple(q for q in register if q.index not in {t.index for t in step.targets})
        for outcome, p, post in _contract(psi, register, step):
            if depth in fixed and outcome != fixed[depth]:
                continue
            if post is None or prob * p < PRUNE_BELOW:
                continue
            yield from walk(depth + 1, post, remaining, prob * p, outcomes + (outcome,))

    yield from walk(0, state.tensor, state.register, 1.0, ())


def enumerate_branches(state: PureState, plan: MeasurementPlan) -> list[Branch]:
    branches = list(iter_branches(state, plan))
    total = sum(b.probability for b in branches)
    if abs(total - 1.0) > 1e-12:
        raise InvariantError("born_rule", f"branch probabilities sum to {total!r}")
    return branches


def sample_branch(state: PureState, plan: MeasurementPlan, rng: np.random.Generator) -> Branch:
    """One trajectory through ``plan``; ``probability`` is the sampled branch's Born weight."""
    plan.validate(state)
    outcomes = []
    prob = 1.0
    for step in plan.steps:
        outcome, p, state = _sample(state, step, rng)
        outcomes.append(outcome)
        prob *= p
    return Branch(tuple(outcomes), prob, state)


class BranchSampler:
    """Repeated sampling of one plan from one initial state.

    Post-measurement states are cached per outcome prefix, so after warm-up a
    trajectory costs one uniform draw per step. Draws are consumed exactly as in
    :func:`sample_branch`, which makes the two interchangeable outcome for outcome.
    """

    def __init__(self, state: PureState, plan: MeasurementPlan):
        plan.validate(state)
        self.state = state
        self.plan = plan
        self._splits: dict[tuple, list] = {}

    def _children(self, prefix: tuple, state: PureState) -> list:
        if prefix not in self._splits:
            self._splits[prefix] = [
                (o, p, None if amps is None else PureState.normalized(amps, state.register))
                for o, p, amps in _split(state, self.plan.steps[len(prefix)])
            ]
        return self._splits[prefix]

    def sample(self, rng: np.random.Generator) -> Branch:
        state = self.state
        prefix: tuple = ()
        prob = 1.0
        for _ in self.plan.steps:
            outcome, p, state = _choose(self._children(prefix, state), rng.random())
            prefix += (outcome,)
            prob *= p
        return Branch(prefix, prob, state)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of a run seeded with ``seed``.

    Depends only on the pair, so trajectories can be generated in any order or
    split across workers without changing a single outcome.
    """
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
    )


def residual_state(state: PureState, plan: MeasurementPlan, outcomes: Sequence) -> PureState:
    """Drop the qubits measured by ``plan`` from a post-measurement state.

    Valid because each measured qubit (or Bell pair) is left in a known
    eigenstate, so the register factorizes into that eigenstate and the rest.
    """
    psi = state.tensor
    positions: list[int] = []
    for step in plan.steps:
        positions.extend(state.position(t) for t in step.targets)
    keep = [p for p in range(state.num_qubits) if p not in positions]
    order = positions + keep
    mat = np.transpose(psi, order).reshape(2 ** len(positions), -1)
    eigen = np.ones(1, dtype=np.complex128)
    for step, outcome in zip(plan.steps, outcomes):
        eigen = np.kron(eigen, dict(_EIGENVECTORS[step.basis])[outcome])
    rest = eigen.conj() @ mat
    norm = np.linalg.norm(rest)
    if abs(norm - 1.0) > 1e-10:
        raise InvariantError("factorization", f"measured qubits not in their eigenstates ({norm!r})")
    return PureState(rest / norm, tuple(state.register[p] for p in keep))
