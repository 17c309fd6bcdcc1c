"""Pure-numpy implementation of the batched circuit kernel.

Mirrors ``_kernels.pyx`` exactly; used when the compiled extension is not
available or ``QTRUST_PURE_PYTHON=1`` is set.
"""

import numpy as np

OP_RY = 0
OP_CNOT = 1


def _ry_batch(psi, n, q, c, s):
    # psi: (N, 2**n); c, s: scalars or (N,) arrays
    view = psi.reshape(psi.shape[0], 2**q, 2, 2 ** (n - q - 1))
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    if np.ndim(c):
        c = c[:, None, None]
        s = s[:, None, None]
    view[:, :, 0, :] = c * a0 - s * a1
    view[:, :, 1, :] = s * a0 + c * a1


def _cnot_batch(psi, n, control, target):
    t = psi.reshape((psi.shape[0],) + (2,) * n)
    sel = [slice(None)] * (n + 1)
    sel[1 + control] = 1
    sel = tuple(sel)
    t_axis = target + (0 if target < control else -1)
    t[sel] = np.flip(t[sel], axis=1 + t_axis).copy()


def expectation_z_batch(enc_angles, kinds, targets, controls, angles, readout):
    """<Z_readout> for each row of ``enc_angles`` after encoding + program.

    Encoding applies RY(enc_angles[i, q]) to qubit q of |0...0>, then the
    gate program (RY/CNOT only, real amplitudes) runs unchanged on every row.
    """
    enc = np.ascontiguousarray(enc_angles, dtype=np.float64)
    n_samples, n = enc.shape
    psi = np.zeros((n_samples, 2**n), dtype=np.float64)
    # product state from the encoding layer
    psi[:, 0] = 1.0
    for q in range(n):
        half = enc[:, q] / 2.0
        _ry_batch(psi, n, q, np.cos(half), np.sin(half))
    for k in range(len(kinds)):
        if kinds[k] == OP_RY:
            half = angles[k] / 2.0
            _ry_batch(psi, n, int(targets[k]), np.cos(half), np.sin(half))
        else:
            _cnot_batch(psi, n, int(controls[k]), int(targets[k]))
    bits = (np.arange(2**n) >> (n - 1 - readout)) & 1
    signs = 1.0 - 2.0 * bits
    return np.clip((psi * psi) @ signs, -1.0, 1.0)
