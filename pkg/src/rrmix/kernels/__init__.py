"""Hot per-loan kernels with a compiled core and a NumPy fallback.

The compiled extension is used when importable unless the environment
variable ``RRMIX_BACKEND=python`` forces the fallback.  Both expose
``truncnorm``, ``draw_loans``, ``log_weights``, ``uniforms`` and
``stream_seeds`` with identical signatures.
"""

import os

from . import _pykernels

python_backend = _pykernels
compiled_backend = None

try:
    from . import _ckernels as compiled_backend
except ImportError:  # pragma: no cover - depends on build
    compiled_backend = None


def select(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None=auto)."""
    if name is None:
        name = os.environ.get("RRMIX_BACKEND", "auto").lower()
    if name == "python":
        return _pykernels
    if name in ("cython", "compiled"):
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    return compiled_backend if compiled_backend is not None else _pykernels


active = select()
BACKEND = active.BACKEND
truncnorm = active.truncnorm
draw_loans = active.draw_loans
log_weights = active.log_weights
uniforms = active.uniforms
stream_seeds = active.stream_seeds
