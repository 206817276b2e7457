"""Kernel backend selection.

The compiled extension is used when it imports; setting ``QPEULER_PURE=1``
forces the NumPy fallback (used by the benchmark and the parity tests).
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
if os.environ.get("QPEULER_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._ext import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
else:
    _impl = _kernels_py


def rk4_linear2(q_nodes, q_mid, h, u0, v0, shift=0.0):
    """RK4 sweep for ``u'' = (q - shift) u``; returns ``(u, u', bad_index)``.

    ``bad_index`` is -1 on success, else the first node with a non-finite state.
    """
    return _impl.rk4_linear2(
        np.ascontiguousarray(q_nodes, dtype=float),
        np.ascontiguousarray(q_mid, dtype=float),
        float(h), float(u0), float(v0), float(shift),
    )


def taylor_invert(c, target, lo, hi):
    """Columnwise root of a monotone polynomial inside a bracket."""
    c = np.array(c, dtype=float, order="C")
    shape = np.shape(target)
    flat = lambda a: np.array(np.broadcast_to(a, shape), dtype=float).ravel()
    x = _impl.taylor_invert(c.reshape(c.shape[0], -1), flat(target), flat(lo), flat(hi))
    return np.asarray(x).reshape(shape)

__all__ = ["BACKEND", "rk4_linear2", "taylor_invert"]
