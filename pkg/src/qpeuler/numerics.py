"""Shared low-level numerics: grids, RK4, root finding, quadrature, eigensolves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from .errors import BracketError, NonFiniteStateError, ShapeError
from .jet import Jet, jet_eval

__all__ = [
    "Grid1D",
    "integrate_ode",
    "find_root",
    "eig_sym",
    "jet_eval",
    "Jet",
    "cumulative_hermite",
    "trapezoid",
]


@dataclass(frozen=True)
class Grid1D:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 16:
            raise ShapeError("a grid needs at least 16 nodes")
        if not np.all(np.diff(x) > 0):
            raise ShapeError("grid nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Grid1D":
        x = np.linspace(a, b, n)
        x[0], x[-1] = a, b
        return cls(x)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self):
        d = np.diff(self.nodes)
        if np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            return float(d[0])
        return d

    @property
    def is_uniform(self) -> bool:
        return isinstance(self.spacing, float)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])


def integrate_ode(system: Callable[[float, np.ndarray], np.ndarray], y0, grid: Grid1D) -> np.ndarray:
    """Classical fixed-step RK4 on the grid nodes; returns an ``(n, d)`` trajectory."""
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    if y.size > 8:
        raise ShapeError("state dimension must be at most 8")
    x = grid.nodes
    out = np.empty((x.size, y.size))
    out[0] = y
    for i in range(x.size - 1):
        t, h = x[i], x[i + 1] - x[i]
        k1 = np.asarray(system(t, y), dtype=float)
        k2 = np.asarray(system(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(system(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(system(t + h, y + h * k3), dtype=float)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteStateError(i + 1)
        out[i + 1] = y
    return out


def find_root(f: Callable[[float], float], bracket: tuple[float, float], tol: float = 1e-14) -> float:
    """Bracketed scalar root (Brent's method; bisection steps guarantee termination)."""
    a, b = map(float, bracket)
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (np.sign(fa) * np.sign(fb) < 0):
        raise BracketError(f"no sign change on [{a}, {b}]: f(a)={fa:.3e}, f(b)={fb:.3e}")
    return float(optimize.brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def eig_sym(matrix, k: int):
    """The ``k`` smallest eigenpairs of a dense symmetric matrix, ascending."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError("matrix must be square")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ShapeError("matrix is not symmetric within 1e-12 relative")
    k = int(min(max(k, 1), A.shape[0]))
    w, v = linalg.eigh(0.5 * (A + A.T), subset_by_index=[0, k - 1])
    return w, v


def trapezoid(f: np.ndarray, x: np.ndarray) -> float:
    return float(np.trapezoid(f, x))


def cumulative_hermite(f: np.ndarray, df: np.ndarray, d3f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative integral of ``f`` from ``x[0]`` using endpoint-corrected trapezoids.

    Each cell uses the Euler-Maclaurin correction with ``f'`` and ``f'''``,
    which is sixth-order accurate per cell.
    """
    h = np.diff(x)
    cell = 0.5 * h * (f[1:] + f[:-1]) - h**2 / 12.0 * (df[1:] - df[:-1]) + h**4 / 720.0 * (d3f[1:] - d3f[:-1])
    return np.concatenate([[0.0], np.cumsum(cell)])
