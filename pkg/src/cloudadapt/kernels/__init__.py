"""Backend selection for the numeric hot loops.

Two interchangeable implementations exist: a numba-JIT one and a pure-numpy
one.  CLOUDADAPT_BACKEND picks between them ("numba" or "numpy"); the default
is numba when importable.  The flag swaps kernel implementations only; it is
not consulted by any experiment configuration.
"""
import os

from . import _numpy

try:
    from . import _numba

    NUMBA_AVAILABLE = _numba.NUMBA_AVAILABLE
except ImportError:  # pragma: no cover
    _numba = None
    NUMBA_AVAILABLE = False

_requested = os.environ.get("CLOUDADAPT_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"CLOUDADAPT_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )
if _requested == "numba" and not NUMBA_AVAILABLE:
    raise RuntimeError("CLOUDADAPT_BACKEND=numba but numba is not importable")

if _requested == "numpy" or not NUMBA_AVAILABLE:
    BACKEND = "numpy"
    _impl = _numpy
else:
    BACKEND = "numba"
    _impl = _numba

conv2d_forward = _impl.conv2d_forward
conv2d_grad_w = _impl.conv2d_grad_w
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
fnv1a64 = _impl.fnv1a64

__all__ = [
    "BACKEND",
    "NUMBA_AVAILABLE",
    "conv2d_forward",
    "conv2d_grad_w",
    "maxpool_forward",
    "maxpool_backward",
    "fnv1a64",
]
