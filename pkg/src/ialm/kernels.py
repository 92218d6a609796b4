"""Backend selection for the dense QCQP inner loop.

The compiled extension is preferred when importable; the numpy fallback is
functionally identical.  Set ``IALM_PURE_PYTHON=1`` to force the fallback
(used by the kernel-parity tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _qcqp_kernel_py

if os.environ.get("IALM_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _qcqp_kernel_py
else:
    try:
        from . import _qcqp_kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _qcqp_kernel_py

solve_al_subproblem = _impl.solve_al_subproblem


def backend_name() -> str:
    return _impl.BACKEND


def python_backend():
    """Always-available reference backend (for parity checks/benchmarks)."""
    return _qcqp_kernel_py
