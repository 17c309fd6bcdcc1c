import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrust import _kernels_py, kernels, qsim
from qtrust.vqc import VqcModel, _program, output_state

compiled = pytest.importorskip("qtrust._kernels", reason="compiled kernel not built")


def closed_form(params, X):
    """<Z_0> of the two-layer RY/CNOT ansatz after RY angle encoding."""
    t1, t2, t3, _ = params
    u = X[:, 0] + t1
    v = X[:, 1] + t2
    return np.cos(t3) * np.cos(u) - np.sin(t3) * np.sin(u) * np.sin(v)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 64))
def test_backends_agree_with_closed_form(seed, n):
    rng = np.random.default_rng(seed)
    params = rng.uniform(-np.pi, np.pi, 4)
    X = rng.normal(0, 2, (n, 2))
    prog = _program(params)
    ref = closed_form(params, X)
    assert np.allclose(compiled.expectation_z_batch(X, *prog, 0), ref, atol=1e-12)
    assert np.allclose(_kernels_py.expectation_z_batch(X, *prog, 0), ref, atol=1e-12)


def test_backends_agree_with_statevector_reference(rng):
    params = rng.uniform(-np.pi, np.pi, 4)
    X = rng.normal(size=(20, 2))
    model = VqcModel(params)
    ref = np.array([qsim.expectation_z(output_state(model, x), 0) for x in X])
    prog = _program(params)
    assert np.allclose(compiled.expectation_z_batch(X, *prog, 0), ref, atol=1e-12)
    assert np.allclose(_kernels_py.expectation_z_batch(X, *prog, 0), ref, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_qubits=st.integers(1, 4), n_ops=st.integers(0, 12))
def test_generic_programs_match_qsim(seed, n_qubits, n_ops):
    rng = np.random.default_rng(seed)
    kinds, targets, controls, angles, gates = [], [], [], [], []
    for _ in range(n_ops):
        if n_qubits > 1 and rng.random() < 0.4:
            c, t = rng.choice(n_qubits, 2, replace=False)
            kinds.append(kernels.OP_CNOT)
            targets.append(t)
            controls.append(c)
            angles.append(0.0)
            gates.append(qsim.CNOT(int(c), int(t)))
        else:
            t, a = int(rng.integers(n_qubits)), float(rng.uniform(-np.pi, np.pi))
            kinds.append(kernels.OP_RY)
            targets.append(t)
            controls.append(-1)
            angles.append(a)
            gates.append(qsim.RY(a, t))
    X = rng.normal(size=(5, n_qubits))
    readout = int(rng.integers(n_qubits))
    prog = (np.array(kinds, np.int32), np.array(targets, np.int32), np.array(controls, np.int32),
            np.array(angles, float))
    got_c = compiled.expectation_z_batch(X, *prog, readout)
    got_p = _kernels_py.expectation_z_batch(X, *prog, readout)
    for i, x in enumerate(X):
        enc = [qsim.RY(float(a), q) for q, a in enumerate(x)]
        state = qsim.run_circuit(qsim.Circuit(n_qubits, tuple(enc + gates)))
        ref = qsim.expectation_z(state, readout)
        assert got_c[i] == pytest.approx(ref, abs=1e-12)
        assert got_p[i] == pytest.approx(ref, abs=1e-12)


def test_empty_batch():
    prog = _program(np.zeros(4))
    assert compiled.expectation_z_batch(np.empty((0, 2)), *prog, 0).shape == (0,)
    assert _kernels_py.expectation_z_batch(np.empty((0, 2)), *prog, 0).shape == (0,)


def test_too_many_qubits_rejected():
    prog = _program(np.zeros(4))
    with pytest.raises(ValueError):
        compiled.expectation_z_batch(np.zeros((1, 5)), *prog, 0)


def test_default_backend_is_compiled():
    assert kernels.compiled_available()
    assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, QTRUST_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from qtrust import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_values_clipped_to_unit_interval(rng):
    prog = _program(rng.normal(size=4))
    vals = compiled.expectation_z_batch(rng.normal(0, 10, (1000, 2)), *prog, 0)
    assert np.all(np.abs(vals) <= 1.0)
    assert math.isfinite(vals.sum())
