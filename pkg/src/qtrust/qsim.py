"""Dense statevector simulator for small (1-4 qubit) circuits.

Qubit 0 is the most significant bit of a basis index, so ``|10>`` on two
qubits means qubit 0 is excited (index 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 4
_NORM_TOL = 1e-10


class CircuitError(ValueError):
    """Raised for invalid qubit indices or mismatched register sizes."""


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CircuitError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise CircuitError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-8:
            raise CircuitError(f"state is not normalized (norm^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@dataclass(frozen=True)
class Gate:
    """One of ``RY(angle, target)``, ``RZ(angle, target)`` or ``CNOT(control, target)``."""

    kind: str
    target: int
    angle: float = 0.0
    control: int | None = None

    def __post_init__(self):
        if self.kind not in ("RY", "RZ", "CNOT"):
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise CircuitError("CNOT requires a control qubit")
            if self.control == self.target:
                raise CircuitError("CNOT control and target must differ")

    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)

    def inverse(self) -> "Gate":
        if self.kind == "CNOT":
            return self
        return Gate(self.kind, self.target, -self.angle)


def RY(angle: float, target: int) -> Gate:
    return Gate("RY", target, float(angle))


def RZ(angle: float, target: int) -> Gate:
    return Gate("RZ", target, float(angle))


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", target, 0.0, control)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        gates = tuple(self.gates)
        for g in gates:
            _check_indices(g, self.n_qubits)
        object.__setattr__(self, "gates", gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise CircuitError("cannot concatenate circuits of different widths")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(g.inverse() for g in reversed(self.gates)))


@dataclass(frozen=True)
class ShotEstimate:
    """Outcome counts from ``shots`` measurements of a binary readout."""

    counts: dict[int, int]
    shots: int

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if sum(self.counts.values()) != self.shots:
            raise ValueError(f"counts sum to {sum(self.counts.values())}, expected {self.shots}")

    @classmethod
    def from_ones(cls, n_ones: int, shots: int) -> "ShotEstimate":
        return cls({0: int(shots - n_ones), 1: int(n_ones)}, int(shots))

    def probability(self, outcome: int) -> float:
        return self.counts.get(outcome, 0) / self.shots

    def probabilities(self, n_outcomes: int = 2) -> np.ndarray:
        return np.array([self.probability(y) for y in range(n_outcomes)])


def _check_indices(gate: Gate, n_qubits: int) -> None:
    for q in gate.qubits():
        if not 0 <= q < n_qubits:
            raise CircuitError(f"qubit index {q} out of range for {n_qubits} qubits")


def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise CircuitError(f"qubit index {qubit} out of range for {n_qubits} qubits")


def gate_matrix(gate: Gate) -> np.ndarray:
    """2x2 matrix of a single-qubit rotation."""
    half = gate.angle / 2.0
    if gate.kind == "RY":
        c, s = np.cos(half), np.sin(half)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if gate.kind == "RZ":
        return np.array([[np.exp(-1j * half), 0.0], [0.0, np.exp(1j * half)]], dtype=np.complex128)
    raise CircuitError(f"{gate.kind} is not a single-qubit rotation")


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    n = state.n_qubits
    _check_indices(gate, n)
    psi = np.array(state.amplitudes).reshape((2,) * n)
    if gate.kind == "CNOT":
        out = psi.copy()
        sel = [slice(None)] * n
        sel[gate.control] = 1
        sub = out[tuple(sel)]
        # the target axis shifts down by one once the control axis is fixed
        t_axis = gate.target - (1 if gate.target > gate.control else 0)
        out[tuple(sel)] = np.flip(sub, axis=t_axis)
    else:
        out = np.tensordot(gate_matrix(gate), psi, axes=([1], [gate.target]))
        out = np.moveaxis(out, 0, gate.target)
    amps = out.reshape(-1)
    # renormalize away round-off so repeated application stays within tolerance
    amps = amps / np.sqrt(np.vdot(amps, amps).real)
    return Statevector(n, amps)


def run_circuit(circuit: Circuit, initial: Statevector | None = None) -> Statevector:
    state = Statevector.zero(circuit.n_qubits) if initial is None else initial
    if state.n_qubits != circuit.n_qubits:
        raise CircuitError(
            f"circuit acts on {circuit.n_qubits} qubits but state has {state.n_qubits}"
        )
    for gate in circuit.gates:
        state = apply_gate(state, gate)
    return state


def _bit_values(n_qubits: int, qubit: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    return (idx >> (n_qubits - 1 - qubit)) & 1


def expectation_z(state: Statevector, qubit: int) -> float:
    _check_qubit(qubit, state.n_qubits)
    signs = 1 - 2 * _bit_values(state.n_qubits, qubit)
    return float(np.clip(np.sum(signs * state.probabilities()), -1.0, 1.0))


def born_probabilities(state: Statevector, qubit: int) -> tuple[float, float]:
    """Marginal probabilities ``(p0, p1)`` of measuring ``qubit``."""
    _check_qubit(qubit, state.n_qubits)
    bits = _bit_values(state.n_qubits, qubit)
    probs = state.probabilities()
    p1 = float(np.clip(probs[bits == 1].sum(), 0.0, 1.0))
    return 1.0 - p1, p1


def sample_shots(
    probabilities: Sequence[float], shots: int, rng: np.random.Generator
) -> ShotEstimate:
    """Draw ``shots`` i.i.d. outcomes from a finite distribution."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.asarray(probabilities, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"not a probability distribution: {p}")
    p = np.clip(p, 0.0, None)
    counts = rng.multinomial(shots, p / p.sum())
    return ShotEstimate({y: int(c) for y, c in enumerate(counts)}, int(shots))


def sample_ones(p1: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized binary sampling: number of ``1`` outcomes per entry of ``p1``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return rng.binomial(shots, np.clip(np.asarray(p1, dtype=float), 0.0, 1.0))


def overlap(a: Statevector, b: Statevector) -> complex:
    if a.n_qubits != b.n_qubits:
        raise CircuitError("states have different register sizes")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def trace_distance_pure(a: Statevector, b: Statevector) -> float:
    """Trace distance between pure states, ``sqrt(1 - |<a|b>|^2)``."""
    fid = min(1.0, abs(overlap(a, b)) ** 2)
    return float(np.sqrt(1.0 - fid))


def states_equal(a: Statevector, b: Statevector, atol: float = 1e-9) -> bool:
    """Equality up to global phase."""
    return abs(1.0 - abs(overlap(a, b))) <= atol


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator) -> Circuit:
    gates: list[Gate] = []
    for _ in range(n_gates):
        kind = rng.integers(3) if n_qubits > 1 else rng.integers(2)
        if kind == 2:
            c, t = rng.choice(n_qubits, size=2, replace=False)
            gates.append(CNOT(int(c), int(t)))
        else:
            angle = float(rng.uniform(-np.pi, np.pi))
            target = int(rng.integers(n_qubits))
            gates.append(RY(angle, target) if kind == 0 else RZ(angle, target))
    return Circuit(n_qubits, tuple(gates))


def random_state(n_qubits: int, rng: np.random.Generator) -> Statevector:
    v = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return Statevector(n_qubits, v / np.linalg.norm(v))


def circuit_from_gates(n_qubits: int, gates: Iterable[Gate]) -> Circuit:
    return Circuit(n_qubits, tuple(gates))
