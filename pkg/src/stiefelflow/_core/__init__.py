"""Numerical core: compiled Cython kernels with a pure-NumPy fallback.

The compiled extension is preferred when importable; set the environment
variable ``STIEFELFLOW_PURE_PYTHON=1`` to force the fallback.  ``BACKEND``
records which implementation is active ("compiled" or "python").  Both
implement the same functions with identical semantics; see
``benchmarks/benchmark_kernels.py`` for a speed comparison.
"""

import os

from . import _fallback

if os.environ.get("STIEFELFLOW_PURE_PYTHON", "").strip().lower() in {"1", "true", "yes"}:
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

ALPHA = _fallback.ALPHA
BETA = _fallback.BETA

feas_residual = _impl.feas_residual
qr_orthonormalize = _impl.qr_orthonormalize
cayley_dense = _impl.cayley_dense
cayley_vector = _impl.cayley_vector
cayley_smw = _impl.cayley_smw
cayley_from_z = _impl.cayley_from_z
sde_step = _impl.sde_step
sde_chain = _impl.sde_chain
sde_step_batch = _impl.sde_step_batch
