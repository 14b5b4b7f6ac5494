"""Network kernel backends: compiled Cython core with a NumPy fallback.

The four kernels (``forward``, ``vjp``, ``forward_grad``, ``grad_vjp``) have
identical contracts in both implementations; the compiled core exists because
training evaluates them millions of times on small batches where per-call
NumPy overhead dominates.  Selection happens once at import:

* ``PHASEFRAC_BACKEND=compiled`` requires the extension (ImportError if absent),
* ``PHASEFRAC_BACKEND=python`` forces the NumPy reference,
* unset/``auto`` uses the extension when importable.
"""

from __future__ import annotations

import os

from . import reference

_choice = os.environ.get("PHASEFRAC_BACKEND", "auto").lower()

if _choice not in ("auto", "compiled", "python"):
    raise RuntimeError(
        f"PHASEFRAC_BACKEND must be 'auto', 'compiled' or 'python', got {_choice!r}"
    )

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _fastcore as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = None
if _impl is None:
    _impl = reference

forward = _impl.forward
vjp = _impl.vjp
forward_grad = _impl.forward_grad
grad_vjp = _impl.grad_vjp


def backend_name() -> str:
    return "compiled" if _impl is not reference else "python"


def compiled_available() -> bool:
    try:
        from . import _fastcore  # noqa: F401
    except ImportError:
        return False
    return True


ACT_RELU = reference.ACT_RELU
ACT_SOFTPLUS = reference.ACT_SOFTPLUS
HEAD_IDENTITY = reference.HEAD_IDENTITY
HEAD_RELU_D = reference.HEAD_RELU_D
