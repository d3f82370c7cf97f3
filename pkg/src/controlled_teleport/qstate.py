"""Dense state vectors and density operators over labelled qubit registers.

Amplitude indexing is big-endian: the qubit at register position 0 is the most
significant bit of the basis index, so ``|q0 q1 ... q(N-1)>`` reads left to right
the way kets are written by hand.
"""

from __future__ import annotations

import contextlib
import enum
import itertools
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import ConfigurationError, InvariantError

ATOL = 1e-12
PSD_ATOL = 1e-10

_audits: list[Counter] = []


@contextlib.contextmanager
def audit() -> Iterator[Counter]:
    """Count every invariant check performed inside the ``with`` block.

    Checks still raise on violation; the counter only records how many states,
    operators and gates were validated, keyed by type name.
    """
    counts: Counter = Counter()
    _audits.append(counts)
    try:
        yield counts
    finally:
        _audits.remove(counts)


def _record(kind: str) -> None:
    for counts in _audits:
        counts[kind] += 1


class Role(enum.Enum):
    MESSAGE = "message"
    EPR_SENDER = "epr_sender"
    EPR_RECEIVER = "epr_receiver"
    AGENT_GHZ = "agent_ghz"
    ALICE_GHZ = "alice_ghz"
    GENERIC = "generic"


@dataclass(frozen=True, order=True)
class QubitId:
    """A qubit's global position plus the role it plays in the protocol.

    ``label`` is the 1-based number within the role (message ``i``, agent ``l``).
    """

    index: int
    role: Role = field(default=Role.GENERIC, compare=False)
    label: int = field(default=0, compare=False)

    def __str__(self) -> str:
        if self.role is Role.MESSAGE:
            return f"{self.label}"
        if self.role is Role.EPR_SENDER:
            return f"{self.label}'"
        if self.role is Role.EPR_RECEIVER:
            return f"{self.label}''"
        if self.role is Role.AGENT_GHZ:
            return f"A{self.label}"
        if self.role is Role.ALICE_GHZ:
            return "a"
        return f"q{self.index}"


Register = tuple[QubitId, ...]
QubitRef = Union[QubitId, int]


def generic_register(num_qubits: int) -> Register:
    return tuple(QubitId(k) for k in range(num_qubits))


def _check_register(register: Sequence[QubitId]) -> Register:
    register = tuple(register)
    if not all(isinstance(q, QubitId) for q in register):
        raise ConfigurationError("register entries must be QubitId")
    if len({q.index for q in register}) != len(register):
        raise ConfigurationError(f"duplicate qubit index in register {register}")
    return register


def _position(register: Register, target: QubitRef) -> int:
    if isinstance(target, QubitId):
        for pos, q in enumerate(register):
            if q.index == target.index:
                return pos
        raise ConfigurationError(f"qubit {target} is not in register")
    pos = int(target)
    if not 0 <= pos < len(register):
        raise ConfigurationError(f"position {pos} outside register of size {len(register)}")
    return pos


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector of length ``2**N`` over an ordered register."""

    amplitudes: np.ndarray
    register: Register

    def __post_init__(self):
        register = _check_register(self.register)
        amplitudes = _frozen(np.ravel(self.amplitudes))
        if amplitudes.size != 2 ** len(register):
            raise ConfigurationError(
                f"{amplitudes.size} amplitudes for a register of {len(register)} qubits"
            )
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > ATOL:
            raise InvariantError("norm", f"|psi| = {norm!r}")
        object.__setattr__(self, "register", register)
        object.__setattr__(self, "amplitudes", amplitudes)
        _record("PureState")

    @classmethod
    def normalized(cls, amplitudes, register: Sequence[QubitId] | None = None) -> "PureState":
        amplitudes = np.ravel(np.asarray(amplitudes, dtype=np.complex128))
        norm = np.linalg.norm(amplitudes)
        if norm < 1e-300:
            raise InvariantError("norm", "cannot normalize a zero vector")
        if register is None:
            register = generic_register(int(np.log2(amplitudes.size)))
        return cls(amplitudes / norm, tuple(register))

    @property
    def num_qubits(self) -> int:
        return len(self.register)

    @property
    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per qubit (read-only view)."""
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def position(self, target: QubitRef) -> int:
        """Register position of ``target``; ints are taken as positions."""
        return _position(self.register, target)

    def overlap(self, other: "PureState") -> complex:
        if self.amplitudes.shape != other.amplitudes.shape:
            raise ConfigurationError("overlap of states with different dimensions")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.register)

    def equals_up_to_phase(self, other: "PureState", atol: float = ATOL) -> bool:
        return abs(abs(self.overlap(other)) - 1.0) <= atol


def basis_state(bits: Sequence[int], register: Sequence[QubitId] | None = None) -> PureState:
    bits = [int(b) for b in bits]
    if register is None:
        register = generic_register(len(bits))
    if len(bits) != len(register):
        raise ConfigurationError(f"{len(bits)} bits for a register of {len(register)} qubits")
    if any(b not in (0, 1) for b in bits):
        raise ConfigurationError(f"bits must be 0 or 1, got {bits}")
    index = int("".join(map(str, bits)), 2) if bits else 0
    amplitudes = np.zeros(2 ** len(bits), dtype=np.complex128)
    amplitudes[index] = 1.0
    return PureState(amplitudes, tuple(register))


def product_state(vectors: Sequence, register: Sequence[QubitId] | None = None) -> PureState:
    """Tensor product of single-qubit amplitude pairs, each normalized first."""
    amplitudes = np.ones(1, dtype=np.complex128)
    for vec in vectors:
        vec = np.asarray(vec, dtype=np.complex128)
        if vec.shape != (2,):
            raise ConfigurationError("single-qubit factors must have two amplitudes")
        amplitudes = np.kron(amplitudes, vec / np.linalg.norm(vec))
    if register is None:
        register = generic_register(len(vectors))
    return PureState.normalized(amplitudes, register)


def tensor(first: PureState, second: PureState) -> PureState:
    return PureState.normalized(
        np.kron(first.amplitudes, second.amplitudes), first.register + second.register
    )


@dataclass(frozen=True, eq=False)
class SingleQubitGate:
    name: str
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        if matrix.shape != (2, 2):
            raise ConfigurationError(f"gate {self.name} is not 2x2")
        if np.max(np.abs(matrix.conj().T @ matrix - np.eye(2))) > ATOL:
            raise InvariantError("unitarity", f"gate {self.name}")
        object.__setattr__(self, "matrix", matrix)
        _record("SingleQubitGate")

    def __repr__(self) -> str:
        return f"SingleQubitGate({self.name})"


_S = 1 / np.sqrt(2)
I = SingleQubitGate("Identity", np.eye(2))
H = SingleQubitGate("H", np.array([[_S, _S], [_S, -_S]]))
X = SingleQubitGate("X", np.array([[0, 1], [1, 0]]))
Y = SingleQubitGate("Y", np.array([[0, -1j], [1j, 0]]))
Z = SingleQubitGate("Z", np.array([[1, 0], [0, -1]]))
GATES = {g.name: g for g in (I, H, X, Y, Z)}


def apply_gate(state: PureState, gate: SingleQubitGate, target: QubitRef) -> PureState:
    pos = state.position(target)
    psi = np.tensordot(gate.matrix, state.tensor, axes=([1], [pos]))
    psi = np.moveaxis(psi, 0, pos)
    return PureState(psi.reshape(-1), state.register)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix over ``subsystem``."""

    matrix: np.ndarray
    subsystem: Register

    def __post_init__(self):
        subsystem = _check_register(self.subsystem)
        matrix = _frozen(self.matrix)
        dim = 2 ** len(subsystem)
        if matrix.shape != (dim, dim):
            raise ConfigurationError(f"matrix shape {matrix.shape} for {len(subsystem)} qubits")
        asym = np.max(np.abs(matrix - matrix.conj().T))
        if asym > ATOL:
            raise InvariantError("hermiticity", f"max |M - M^dag| = {asym:.3e}")
        tr = np.trace(matrix)
        if abs(tr - 1.0) > ATOL:
            raise InvariantError("trace", f"tr = {tr!r}")
        lowest = np.linalg.eigvalsh((matrix + matrix.conj().T) / 2)[0]
        if lowest < -PSD_ATOL:
            raise InvariantError("positivity", f"smallest eigenvalue {lowest:.3e}")
        object.__setattr__(self, "subsystem", subsystem)
        object.__setattr__(self, "matrix", matrix)
        _record("DensityOperator")

    @property
    def num_qubits(self) -> int:
        return len(self.subsystem)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)

    def conjugate_by(self, gate: SingleQubitGate, target: QubitRef = 0) -> "DensityOperator":
        """Return ``U rho U^dag`` with ``U`` acting on one qubit of the subsystem."""
        pos = _position(self.subsystem, target)
        k = self.num_qubits
        u = np.eye(1)
        for q in range(k):
            u = np.kron(u, gate.matrix if q == pos else np.eye(2))
        return DensityOperator(u @ self.matrix @ u.conj().T, self.subsystem)

    def max_abs_diff(self, other: "DensityOperator") -> float:
        return float(np.max(np.abs(self.matrix - other.matrix)))


def _keep_positions(register: Register, keep: Iterable[QubitRef]) -> list[int]:
    keep = list(keep)
    if not keep:
        raise ConfigurationError("keep must name at least one qubit")
    positions = sorted({_position(register, q) for q in keep})
    if len(positions) != len(keep):
        raise ConfigurationError("keep lists a qubit twice")
    return positions


def reduced_density(state: PureState, keep: Iterable[QubitRef]) -> DensityOperator:
    """Reduced operator of a pure state, without forming the full ``|psi><psi|``."""
    positions = _keep_positions(state.register, keep)
    rest = [p for p in range(state.num_qubits) if p not in positions]
    psi = np.transpose(state.tensor, positions + rest).reshape(2 ** len(positions), -1)
    return DensityOperator(psi @ psi.conj().T, tuple(state.register[p] for p in positions))


def partial_trace(
    rho: Union[DensityOperator, PureState], keep: Iterable[QubitRef]
) -> DensityOperator:
    """Trace out every qubit not in ``keep``; kept qubits stay in register order."""
    if isinstance(rho, PureState):
        return reduced_density(rho, keep)
    positions = _keep_positions(rho.subsystem, keep)
    k = rho.num_qubits
    letters = string.ascii_letters
    rows = list(letters[:k])
    cols = list(letters[k : 2 * k])
    for p in range(k):
        if p not in positions:
            cols[p] = rows[p]
    out = "".join(rows[p] for p in positions) + "".join(cols[p] for p in positions)
    reduced = np.einsum(
        "".join(rows) + "".join(cols) + "->" + out, rho.matrix.reshape((2,) * (2 * k))
    )
    dim = 2 ** len(positions)
    return DensityOperator(reduced.reshape(dim, dim), tuple(rho.subsystem[p] for p in positions))


def fidelity(rho: Union[DensityOperator, PureState], target: PureState) -> float:
    """Overlap ``<phi|rho|phi>`` of a target pure state with ``rho``."""
    matrix = rho.density().matrix if isinstance(rho, PureState) else rho.matrix
    phi = target.amplitudes
    if matrix.shape[0] != phi.size:
        raise ConfigurationError(
            f"fidelity of a {matrix.shape[0]}-dim operator with a {phi.size}-dim state"
        )
    value = np.vdot(phi, matrix @ phi)
    if abs(value.imag) > ATOL:
        raise InvariantError("hermiticity", f"imaginary fidelity residue {value.imag:.3e}")
    return float(np.clip(value.real, 0.0, 1.0))


def density_from_branches(branches: Iterable[tuple[float, PureState]]) -> DensityOperator:
    """Mixture ``sum_b p_b |b><b|`` of pure branch states."""
    branches = list(branches)
    if not branches:
        raise ConfigurationError("no branches to mix")
    total = sum(p for p, _ in branches)
    if any(p < 0 for p, _ in branches) or abs(total - 1.0) > ATOL:
        raise InvariantError("probability", f"branch weights sum to {total!r}")
    register = branches[0][1].register
    dim = branches[0][1].amplitudes.size
    matrix = np.zeros((dim, dim), dtype=np.complex128)
    for p, state in branches:
        if state.amplitudes.size != dim:
            raise ConfigurationError("branches live on registers of different sizes")
        matrix += p * np.outer(state.amplitudes, state.amplitudes.conj())
    return DensityOperator(matrix, register)


def bits_of(index: int, num_qubits: int) -> tuple[int, ...]:
    """Big-endian bit tuple of a basis index."""
    return tuple((index >> (num_qubits - 1 - q)) & 1 for q in range(num_qubits))


def all_bitstrings(num_bits: int) -> Iterator[tuple[int, ...]]:
    return itertools.product((0, 1), repeat=num_bits)
