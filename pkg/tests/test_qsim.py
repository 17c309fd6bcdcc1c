import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrust import qsim
from qtrust.qsim import CNOT, RY, RZ, Circuit, CircuitError, Statevector


# Independent oracle: full 2^n x 2^n unitaries built with Kronecker products,
# qubit 0 as the most significant bit.
def _single(n, q, m):
    ops = [np.eye(2)] * n
    ops[q] = m
    out = np.array([[1.0]])
    for o in ops:
        out = np.kron(out, o)
    return out


def _oracle_unitary(n, gate):
    if gate.kind == "RY":
        c, s = math.cos(gate.angle / 2), math.sin(gate.angle / 2)
        return _single(n, gate.target, np.array([[c, -s], [s, c]]))
    if gate.kind == "RZ":
        return _single(n, gate.target, np.diag([np.exp(-0.5j * gate.angle), np.exp(0.5j * gate.angle)]))
    p0, p1, x = np.diag([1, 0]), np.diag([0, 1]), np.array([[0, 1], [1, 0]])
    return _single(n, gate.control, p0) + _single(n, gate.control, p1) @ _single(n, gate.target, x)


def _oracle_run(circuit, amps):
    for g in circuit.gates:
        amps = _oracle_unitary(circuit.n_qubits, g) @ amps
    return amps


def test_ry_pi_flips_zero_to_one():
    out = qsim.apply_gate(Statevector.zero(1), RY(math.pi, 0))
    assert qsim.states_equal(out, Statevector.basis(1, 1))


def test_ry_zero_is_identity(rng):
    psi = qsim.random_state(2, rng)
    assert np.allclose(qsim.apply_gate(psi, RY(0.0, 1)).amplitudes, psi.amplitudes)


def test_cnot_builds_bell_state():
    plus = Statevector(2, np.array([1, 0, 1, 0]) / math.sqrt(2))
    out = qsim.apply_gate(plus, CNOT(0, 1))
    assert np.allclose(out.amplitudes, np.array([1, 0, 0, 1]) / math.sqrt(2))


def test_empty_circuit_leaves_state(rng):
    psi = qsim.random_state(3, rng)
    assert np.array_equal(qsim.run_circuit(Circuit(3), psi).amplitudes, psi.amplitudes)


def test_half_rotation_gives_balanced_probabilities():
    out = qsim.run_circuit(Circuit(1, (RY(math.pi / 2, 0),)))
    assert np.allclose(out.probabilities(), [0.5, 0.5])


def test_sequential_rotations_compose(rng):
    a, b = rng.uniform(-3, 3, 2)
    two = qsim.run_circuit(Circuit(1, (RY(a, 0), RY(b, 0))))
    one = qsim.run_circuit(Circuit(1, (RY(a + b, 0),)))
    assert qsim.states_equal(two, one)


def test_expectation_z_eigenstates():
    assert qsim.expectation_z(Statevector.basis(1, 0), 0) == 1.0
    assert qsim.expectation_z(Statevector.basis(1, 1), 0) == -1.0
    half = qsim.run_circuit(Circuit(1, (RY(math.pi / 2, 0),)))
    assert abs(qsim.expectation_z(half, 0)) < 1e-10


def test_born_probabilities_examples():
    assert qsim.born_probabilities(Statevector.zero(1), 0) == (1.0, 0.0)
    half = qsim.run_circuit(Circuit(1, (RY(math.pi / 2, 0),)))
    assert np.allclose(qsim.born_probabilities(half, 0), (0.5, 0.5))
    third = qsim.run_circuit(Circuit(1, (RY(2 * math.pi / 3, 0),)))
    assert np.allclose(qsim.born_probabilities(third, 0), (0.25, 0.75))


def test_born_matches_expectation(rng):
    psi = qsim.random_state(3, rng)
    for q in range(3):
        p0, p1 = qsim.born_probabilities(psi, q)
        assert p0 + p1 == pytest.approx(1.0)
        assert p1 == pytest.approx((1 - qsim.expectation_z(psi, q)) / 2)


def test_qubit_zero_is_most_significant():
    out = qsim.run_circuit(Circuit(2, (RY(math.pi, 0),)))
    assert qsim.states_equal(out, Statevector.basis(2, 2))  # |10>


def test_index_errors():
    with pytest.raises(CircuitError):
        Circuit(2, (RY(0.1, 2),))
    with pytest.raises(CircuitError):
        CNOT(1, 1)
    with pytest.raises(CircuitError):
        qsim.apply_gate(Statevector.zero(1), CNOT(0, 1))
    with pytest.raises(CircuitError):
        qsim.expectation_z(Statevector.zero(2), 5)


def test_dimension_mismatch():
    with pytest.raises(CircuitError):
        qsim.run_circuit(Circuit(2, ()), Statevector.zero(3))
    with pytest.raises(CircuitError):
        Statevector(2, np.ones(3) / math.sqrt(3))
    with pytest.raises(CircuitError):
        Statevector(1, np.array([1.0, 1.0]))


def test_sample_shots_degenerate_and_deterministic():
    est = qsim.sample_shots([1.0, 0.0], 200, np.random.default_rng(0))
    assert est.counts == {0: 200, 1: 0}
    a = qsim.sample_shots([0.5, 0.5], 200, np.random.default_rng(7))
    b = qsim.sample_shots([0.5, 0.5], 200, np.random.default_rng(7))
    assert a.counts == b.counts
    with pytest.raises(ValueError):
        qsim.sample_shots([0.5, 0.5], 0, np.random.default_rng(0))


def test_shot_variance_matches_binomial():
    ones = qsim.sample_ones(np.full(10_000, 0.5), 200, np.random.default_rng(3))
    assert np.var(ones / 200) == pytest.approx(0.5 * 0.5 / 200, rel=0.10)


def test_shot_estimate_invariants():
    est = qsim.ShotEstimate.from_ones(30, 200)
    assert est.probabilities().sum() == pytest.approx(1.0)
    assert est.probability(1) == 0.15
    with pytest.raises(ValueError):
        qsim.ShotEstimate({0: 3, 1: 3}, 5)
    with pytest.raises(ValueError):
        qsim.ShotEstimate({0: 0}, 0)


def test_large_shot_frequency_converges(rng):
    psi = qsim.run_circuit(qsim.random_circuit(2, 8, rng))
    est = qsim.sample_shots(psi.probabilities(), 100_000, rng)
    assert np.abs(est.probabilities(4) - psi.probabilities()).max() < 0.01


def test_trace_distance_examples(rng):
    psi = qsim.random_state(2, rng)
    assert qsim.trace_distance_pure(psi, psi) == pytest.approx(0.0, abs=1e-7)
    assert qsim.trace_distance_pure(Statevector.basis(1, 0), Statevector.basis(1, 1)) == 1.0
    half = qsim.run_circuit(Circuit(1, (RY(math.pi / 2, 0),)))
    assert qsim.trace_distance_pure(Statevector.zero(1), half) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(CircuitError):
        qsim.trace_distance_pure(Statevector.zero(1), Statevector.zero(2))


def test_global_phase_ignored(rng):
    psi = qsim.random_state(2, rng)
    rotated = Statevector(2, psi.amplitudes * np.exp(1j * 0.7))
    assert qsim.states_equal(psi, rotated)


def test_states_are_immutable():
    psi = Statevector.zero(1)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 0.0


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, n=st.integers(1, 4), depth=st.integers(0, 20))
def test_matches_kronecker_oracle(seed, n, depth):
    rng = np.random.default_rng(seed)
    circ = qsim.random_circuit(n, depth, rng)
    start = qsim.random_state(n, rng)
    got = qsim.run_circuit(circ, start).amplitudes
    assert np.allclose(got, _oracle_run(circ, start.amplitudes), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, n=st.integers(1, 4), depth=st.integers(0, 20))
def test_norm_preserved(seed, n, depth):
    rng = np.random.default_rng(seed)
    out = qsim.run_circuit(qsim.random_circuit(n, depth, rng), qsim.random_state(n, rng))
    assert abs(out.norm_squared() - 1.0) < 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=seeds, n=st.integers(1, 4), depth=st.integers(1, 20))
def test_inverse_recovers_input(seed, n, depth):
    rng = np.random.default_rng(seed)
    circ = qsim.random_circuit(n, depth, rng)
    start = qsim.random_state(n, rng)
    back = qsim.run_circuit(circ + circ.inverse(), start)
    assert np.allclose(back.amplitudes, start.amplitudes, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, n=st.integers(1, 3))
def test_trace_distance_is_a_metric(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (qsim.random_state(n, rng) for _ in range(3))
    d = qsim.trace_distance_pure
    assert d(a, b) == d(b, a)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9
    assert 0.0 <= d(a, b) <= 1.0


def test_rz_inverse_and_phase_only(rng):
    psi = qsim.random_state(1, rng)
    out = qsim.apply_gate(psi, RZ(1.1, 0))
    assert np.allclose(out.probabilities(), psi.probabilities())
    assert RZ(1.1, 0).inverse().angle == -1.1
