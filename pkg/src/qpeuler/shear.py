"""Even shear equilibrium ``psi''' = Q psi'`` near Couette, its critical points and
the anchor fixed point that couples the corrector to those critical points."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FixedPointError, NonFiniteStateError, NormalizationError, ShapeError, SpectralCountError
from .numerics import Grid1D, cumulative_hermite
from .potential import Potential, PotentialSpec, build_corrector

__all__ = [
    "ShearEquilibrium",
    "solve_shear",
    "find_critical_points",
    "fixed_point_equilibrium",
    "couette_distance",
    "taylor_at_critical",
    "default_nodes",
    "limit_constants",
]


def default_nodes(E: float, m: float = 0.0, r: float = 1.0) -> int:
    """Uniform node count on [0, 1]: at least 4096 cells, 64 per wavelength
    2 pi/E, and 32 per edge-layer width r/m of the well."""
    n = max(4096, math.ceil(64 * E / (2 * math.pi)), math.ceil(32 * m / r) if m else 0)
    return 1 << math.ceil(math.log2(n))


def limit_constants(E: float, r: float) -> tuple[float, float]:
    """``(A, B)`` of the singular limit with unit outer slope.

    ``psi' -> B sin(E y)`` inside and ``y - A sgn y`` outside; continuity of
    ``psi'`` and ``psi''`` at ``y = r`` gives ``B = 1/(E cos E r)`` and
    ``A = r - tan(E r)/E`` (``= r - 1/E`` under the depth-width constraint).
    """
    return r - math.tan(E * r) / E, 1.0 / (E * math.cos(E * r))


@dataclass
class ShearEquilibrium:
    """Samples on the half grid ``[0, 1]``; the full profile is the even extension."""

    grid: Grid1D
    psi: np.ndarray
    dpsi: np.ndarray
    d2psi: np.ndarray
    d3psi: np.ndarray
    q: np.ndarray
    potential: object
    A: float
    B: float
    E: float
    r: float
    kappa0: int
    critical_points: np.ndarray = field(default=None)
    _jet_cache: dict = field(default_factory=dict, repr=False)

    @property
    def y(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def h(self) -> float:
        return float(self.grid.spacing)

    @property
    def gamma(self) -> float:
        return self.r**5

    def full(self):
        """Samples on ``[-1, 1]`` by parity: ``(y, psi, psi', psi'', psi''')``."""
        y = np.concatenate([-self.y[:0:-1], self.y])
        ev = lambda a: np.concatenate([a[:0:-1], a])
        od = lambda a: np.concatenate([-a[:0:-1], a])
        return y, ev(self.psi), od(self.dpsi), ev(self.d2psi), od(self.d3psi)

    @property
    def strips(self) -> list[tuple[float, float]]:
        c = self.critical_values_points()
        return [(c[p], c[p + 1]) for p in range(len(c) - 1)]

    def critical_values_points(self) -> np.ndarray:
        cps = self.critical_points if self.critical_points is not None else np.array([0.0])
        return np.concatenate([cps, [1.0]])

    # --- local Taylor expansions ----------------------------------------

    def node_jets(self, idx, order: int) -> np.ndarray:
        """Normalized Taylor coefficients of ``psi`` at nodes ``idx``; shape ``(order+1, len)``."""
        idx = np.asarray(idx, dtype=int)
        return self.jets_at(self.y[idx], self.psi[idx], self.dpsi[idx], self.d2psi[idx], order)

    def jets_at(self, y0, psi0, u0, v0, order: int) -> np.ndarray:
        """Taylor coefficients of ``psi`` at ``y0`` from ``(psi, psi', psi'')`` via ``u'' = Q u``."""
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        nq = max(order - 3, 0)
        qj = self.potential.jet(np.abs(y0), nq).c
        # parity of Q: coefficients of odd order flip sign for y0 < 0
        sgn = np.where(y0 < 0, -1.0, 1.0)
        for k in range(1, qj.shape[0], 2):
            qj[k] = qj[k] * sgn
        u = np.zeros((order,) + y0.shape)
        u[0] = u0
        if order > 1:
            u[1] = v0
        for k in range(0, order - 2):
            acc = np.zeros(y0.shape)
            for j in range(0, min(k, nq) + 1):
                acc += qj[j] * u[k - j]
            u[k + 2] = acc / ((k + 2) * (k + 1))
        c = np.empty((order + 1,) + y0.shape)
        c[0] = psi0
        c[1:] = u / np.arange(1, order + 1).reshape((-1,) + (1,) * y0.ndim)
        return c

    def evaluate(self, y, nderiv: int = 3, order: int = 14) -> np.ndarray:
        """``psi^(k)(y)`` for ``k = 0..nderiv`` at arbitrary ``|y| <= 1``."""
        y = np.asarray(y, dtype=float)
        ay = np.abs(y).ravel()
        idx = np.clip(np.rint(ay / self.h).astype(int), 0, self.y.size - 1)
        c = self.node_jets(idx, order)
        x = ay - self.y[idx]
        out = np.empty((nderiv + 1,) + ay.shape)
        for d in range(nderiv + 1):
            acc = np.zeros_like(ay)
            for k in range(order, d - 1, -1):
                acc = acc * x + c[k] * math.perm(k, d)
            out[d] = acc
        sgn = np.where(y.ravel() < 0, -1.0, 1.0)
        out[1::2] *= sgn
        return out.reshape((nderiv + 1,) + y.shape)

    def manifest(self) -> dict:
        return {
            "E": self.E,
            "r": self.r,
            "kappa0": self.kappa0,
            "A": self.A,
            "B": self.B,
            "critical_points": None if self.critical_points is None else self.critical_points.tolist(),
            "critical_values": None if self.critical_points is None else self.evaluate(self.critical_points, 0)[0].tolist(),
            "psi0": float(self.psi[0]),
            "couette_distance": couette_distance(self),
            "nodes": int(self.y.size),
        }

    def write_csv(self, path) -> None:
        y, p0, p1, p2, p3 = self.full()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "psi", "dpsi", "d2psi", "d3psi"])
            w.writerows(zip(y, p0, p1, p2, p3))

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)


def solve_shear(potential, n_nodes: int | None = None, *, E: float | None = None, r: float | None = None,
                kappa0: int | None = None, locate: bool = True) -> ShearEquilibrium:
    """Integrate ``u'' = Q u`` from ``u(0)=0, u'(0)=1``, normalize ``u'(1) = 1`` and
    integrate once more with ``psi(1) = (1 - A)^2 / 2``."""
    spec = getattr(potential, "spec", None)
    E = float(E if E is not None else (spec.E if spec else potential.E))
    r = float(r if r is not None else (spec.r if spec else 1.0))
    kappa0 = int(kappa0 if kappa0 is not None else (spec.kappa0 if spec else 0))
    if n_nodes is None:
        n_nodes = default_nodes(E, spec.m if spec else 0, r) + 1
    if n_nodes - 1 < 4096 or (n_nodes - 1) * 2 * math.pi < 64 * E:
        raise ShapeError("need at least 4096 cells and 64 nodes per wavelength 2 pi/E")
    grid = Grid1D.uniform(0.0, 1.0, n_nodes)
    y = grid.nodes
    h = grid.spacing
    q = potential.values(y)
    qm = potential.values(grid.midpoints())
    u, v, bad = kernels.rk4_linear2(q, qm, h, 0.0, 1.0)
    if bad >= 0:
        raise NonFiniteStateError(bad)
    if abs(v[-1]) < 1e-12 * max(1.0, np.abs(v).max()):
        raise NormalizationError("u'(1) vanishes; cannot normalize the outer slope")
    u = u / v[-1]
    v = v / v[-1]
    d3 = q * u
    u3 = potential.derivative(y, 1) * u + q * v  # (Q u)'
    A, B = limit_constants(E, r) if (E > 0 and r < 1.0) else (0.0, 0.0)
    prim = cumulative_hermite(u, v, u3, y)
    psi = prim - prim[-1] + 0.5 * (1.0 - A) ** 2
    eq = ShearEquilibrium(grid, psi, u, v, d3, q, potential, A, B, E, r, kappa0)
    if locate and kappa0 > 0:
        eq.critical_points = find_critical_points(eq)
    return eq


def find_critical_points(eq: ShearEquilibrium, count: int | None = None) -> np.ndarray:
    """``{0} U {y_1 < ... < y_k0}``: sign changes of ``psi'`` on ``(0, r - gamma)``,
    refined on the local Taylor expansion to 1e-12."""
    k0 = eq.kappa0 if count is None else count
    y, u = eq.y, eq.dpsi
    lim = eq.r - eq.gamma
    s = np.sign(u)
    s[0] = s[1]
    change = np.nonzero((s[1:] * s[:-1] < 0) | (s[1:] == 0))[0]
    inside = change[y[change + 1] <= lim]
    layer = change[(y[change] >= lim) & (y[change] <= eq.r + eq.gamma)]
    beyond = change[y[change] > eq.r + eq.gamma]
    if layer.size:
        raise SpectralCountError("psi' changes sign inside the boundary layer around y = r")
    if inside.size != k0 or beyond.size:
        raise SpectralCountError(
            f"found {inside.size} critical points in (0, r - gamma) and {beyond.size} outside; expected {k0}"
        )
    roots = []
    for i in inside:
        c = eq.node_jets([i], 14)[:, 0]
        du = np.arange(1, c.size) * c[1:]  # Taylor coefficients of psi' at y_i
        a, b = 0.0, y[i + 1] - y[i]
        fa = np.polyval(du[::-1], a)
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = np.polyval(du[::-1], mid)
            if fm == 0.0 or b - a < 1e-14:
                break
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
        roots.append(y[i] + 0.5 * (a + b))
    return np.concatenate([[0.0], roots])


def fixed_point_equilibrium(spec: PotentialSpec, n_nodes: int | None = None, tol: float = 1e-10,
                            max_iter: int = 20):
    """Iterate anchors -> corrector -> shear -> critical points to a fixed point.

    Returns ``(corrector, equilibrium, info)``; ``info`` holds the iteration count
    and the anchor history.
    """
    anchors = spec.limit_anchors()
    history = [anchors.copy()]
    for it in range(1, max_iter + 1):
        corr = build_corrector(spec, anchors)
        eq = solve_shear(Potential(spec, corr), n_nodes)
        new = eq.critical_points[1:]
        move = float(np.max(np.abs(new - anchors)))
        history.append(new.copy())
        if move < tol:
            if not np.array_equal(new, anchors):
                # one more pass so corrector and equilibrium share identical anchors
                corr = build_corrector(spec, new)
                eq = solve_shear(Potential(spec, corr), n_nodes)
            info = {"iterations": it, "history": [h.tolist() for h in history], "last_move": move,
                    "anchor_drift": (eq.critical_points[1:] - spec.limit_anchors()).tolist()}
            return corr, eq, info
        anchors = new
    raise FixedPointError(f"anchor iteration did not converge in {max_iter} steps (last move {move:.2e})")


def couette_distance(eq: ShearEquilibrium) -> float:
    """Discrete ``H^3`` distance of ``psi`` to ``y^2/2`` on ``[-1, 1]``."""
    y = eq.y
    d0 = eq.psi - 0.5 * y**2
    d1 = eq.dpsi - y
    d2 = eq.d2psi - 1.0
    d3 = eq.d3psi
    tot = sum(np.trapezoid(d * d, y) for d in (d0, d1, d2, d3))
    return float(math.sqrt(2.0 * tot))


def taylor_at_critical(eq: ShearEquilibrium, p: int, order: int, full: bool = False):
    """Even expansion ``psi(y_p + d) = sum_n c_n d^(2n)``, ``n = 0..order``.

    The coefficients come from the ``u'' = Q u`` recurrence at the critical
    point itself.  With ``full=True`` the odd coefficients are returned too.
    """
    if not 0 <= p <= eq.kappa0:
        raise ValueError("strip index out of range")
    yc = float(eq.critical_points[p])
    N = 2 * order + 1
    vals = eq.evaluate(np.array([yc]), 2)[:, 0]
    u0 = 0.0 if p == 0 else vals[1]
    c = eq.jets_at(np.array([yc]), vals[0], u0, vals[2], N)[:, 0]
    if full:
        return c
    return c[0::2]
