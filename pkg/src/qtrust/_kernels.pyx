# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched circuit kernel (same contract as ``_kernels_py``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

cdef enum:
    MAX_DIM = 16

OP_RY = 0
OP_CNOT = 1


cdef inline void _ry(double* psi, int n, int q, double c, double s) noexcept nogil:
    cdef int dim = 1 << n
    cdef int mask = 1 << (n - 1 - q)
    cdef int i
    cdef double a0, a1
    for i in range(dim):
        if i & mask:
            continue
        a0 = psi[i]
        a1 = psi[i | mask]
        psi[i] = c * a0 - s * a1
        psi[i | mask] = s * a0 + c * a1


cdef inline void _cnot(double* psi, int n, int control, int target) noexcept nogil:
    cdef int dim = 1 << n
    cdef int cmask = 1 << (n - 1 - control)
    cdef int tmask = 1 << (n - 1 - target)
    cdef int i
    cdef double tmp
    for i in range(dim):
        if (i & cmask) and not (i & tmask):
            tmp = psi[i]
            psi[i] = psi[i | tmask]
            psi[i | tmask] = tmp


def expectation_z_batch(enc_angles, kinds, targets, controls, angles, int readout):
    cdef double[:, ::1] enc = np.ascontiguousarray(enc_angles, dtype=np.float64)
    cdef int[::1] k_kinds = np.ascontiguousarray(kinds, dtype=np.int32)
    cdef int[::1] k_targets = np.ascontiguousarray(targets, dtype=np.int32)
    cdef int[::1] k_controls = np.ascontiguousarray(controls, dtype=np.int32)
    cdef double[::1] k_angles = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t n_samples = enc.shape[0]
    cdef int n = <int>enc.shape[1]
    cdef int dim = 1 << n
    cdef int n_ops = <int>k_kinds.shape[0]
    if dim > MAX_DIM:
        raise ValueError("kernel supports at most 4 qubits")

    # per-op cos/sin of half angles, computed once for the whole batch
    cdef double[::1] op_c = np.cos(np.asarray(k_angles) / 2.0)
    cdef double[::1] op_s = np.sin(np.asarray(k_angles) / 2.0)

    out = np.empty(n_samples, dtype=np.float64)
    cdef double[::1] res = out
    cdef double psi[MAX_DIM]
    cdef Py_ssize_t r
    cdef int q, k, i, rmask = 1 << (n - 1 - readout)
    cdef double acc, p

    with nogil:
        for r in range(n_samples):
            for i in range(dim):
                psi[i] = 0.0
            psi[0] = 1.0
            for q in range(n):
                _ry(psi, n, q, cos(enc[r, q] / 2.0), sin(enc[r, q] / 2.0))
            for k in range(n_ops):
                if k_kinds[k] == 0:
                    _ry(psi, n, k_targets[k], op_c[k], op_s[k])
                else:
                    _cnot(psi, n, k_controls[k], k_targets[k])
            acc = 0.0
            for i in range(dim):
                p = psi[i] * psi[i]
                if i & rmask:
                    acc -= p
                else:
                    acc += p
            if acc > 1.0:
                acc = 1.0
            elif acc < -1.0:
                acc = -1.0
            res[r] = acc
    return out
