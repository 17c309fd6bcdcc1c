"""Backend selection for the batched circuit kernel.

The compiled Cython extension is used when it imports; otherwise (or when
``QTRUST_PURE_PYTHON=1``) the numpy implementation takes over. Both share the
signature ``expectation_z_batch(enc_angles, kinds, targets, controls, angles,
readout)``.
"""

import os

from . import _kernels_py

OP_RY = _kernels_py.OP_RY
OP_CNOT = _kernels_py.OP_CNOT

_FORCE_PURE = os.environ.get("QTRUST_PURE_PYTHON", "").strip() not in ("", "0")

if _FORCE_PURE:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

expectation_z_batch = _impl.expectation_z_batch
expectation_z_batch_py = _kernels_py.expectation_z_batch


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
