"""Physical flow field of a converged solution: sampling, stagnation points and streamlines."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from skimage import measure

from .errors import DegenerateFieldWarning
from .qp_solver import SolveResult, _fd6, tail_correction

log = logging.getLogger(__name__)

__all__ = [
    "FlowEvaluator",
    "FlowField",
    "StagnationPoint",
    "LevelSet",
    "assemble_flow",
    "find_stagnation",
    "trace_level_sets",
    "encircles",
]


class FlowEvaluator:
    """``psi`` and its derivatives at arbitrary ``(x, y)``.

    Every y-profile (the shear plus shift, and one per angular mode) is a cubic
    Hermite spline through exact nodal values and slopes; profiles are even in
    ``y`` so negative ``y`` is served by reflection.
    """

    def __init__(self, result: SolveResult, with_tail: bool = True):
        st, fam, sp = result.state, result.family, result.spectrum
        eq = fam.eq
        self.eps = st.eps
        self.omega = st.omega.copy()
        self.wl = st.modes @ st.omega
        J = st.J
        H = eq.h
        mu = sp.eigenvalues[:J]
        phi, dphi = sp.phi[:J], sp.dphi[:J]
        dq = eq.potential.derivative(eq.y, 1)
        d2phi = (eq.q - mu[:, None]) * phi
        d3phi = dq * phi + (eq.q - mu[:, None]) * dphi
        z = st.zeta
        P = [z @ phi, z @ dphi, z @ d2phi, z @ d3phi]
        if with_tail and st.eps:
            T = result.tail if result.tail is not None else tail_correction(result)
            P[0] = P[0] + T
            for o in (1, 2, 3):
                P[o] = P[o] + np.stack([_fd6(t, H, o) for t in T])
        h = fam.shift
        B = [eq.psi + h, eq.dpsi + _fd6(h, H, 1), eq.d2psi + _fd6(h, H, 2), eq.d3psi + _fd6(h, H, 3)]
        prof = [np.vstack([B[o][None], P[o]]) for o in range(4)]
        y = eq.y
        self._s = [CubicHermiteSpline(y, prof[o], prof[o + 1], axis=1) for o in range(3)]

    def _profiles(self, y, order: int, nu: int = 0):
        ay = np.abs(y)
        out = self._s[order](ay, nu)
        if (order + nu) % 2:
            out = out * np.sign(np.where(y == 0, 1.0, y))
        return out

    def fields(self, x, y) -> dict:
        """Pointwise fields for broadcast-compatible ``x`` and ``y``."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        shape = x.shape
        x, y = x.ravel(), y.ravel()
        c = np.cos(np.outer(self.wl, x))
        s = np.sin(np.outer(self.wl, x))
        e, wl = self.eps, self.wl[:, None]
        p0, p1, p2 = (self._profiles(y, o) for o in range(3))
        dp0 = self._profiles(y, 0, 1)
        f = {
            "psi": p0[0] + e * np.sum(c * p0[1:], axis=0),
            "psi_x": -e * np.sum(wl * s * p0[1:], axis=0),
            "psi_y": p1[0] + e * np.sum(c * p1[1:], axis=0),
            "psi_xx": -e * np.sum(wl**2 * c * p0[1:], axis=0),
            "psi_xy": -e * np.sum(wl * s * p1[1:], axis=0),
            "psi_yy": p2[0] + e * np.sum(c * p2[1:], axis=0),
            # v_y through the derivative of the value spline, an independent route
            "v_y": e * np.sum(wl * s * dp0[1:], axis=0),
        }
        f["vorticity"] = f["psi_xx"] + f["psi_yy"]
        return {k: v.reshape(shape) for k, v in f.items()}


@dataclass
class FlowField:
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    vorticity: np.ndarray
    eps: float
    omega: np.ndarray
    evaluator: FlowEvaluator | None = field(default=None, repr=False)

    @property
    def window(self) -> tuple:
        return (float(self.x[0]), float(self.x[-1]), int(self.x.size))

    def write_csv(self, path) -> None:
        X, Y = np.meshgrid(self.x, self.y)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "psi", "u", "v", "vorticity"])
            for row in zip(X.ravel(), Y.ravel(), self.psi.ravel(), self.u.ravel(), self.v.ravel(),
                           self.vorticity.ravel()):
                w.writerow([f"{a:.17g}" for a in row])


def default_window(omega) -> float:
    return 4.0 * 2.0 * math.pi / float(np.min(omega))


def assemble_flow(result: SolveResult, window: tuple | float | None = None, nx: int | None = None,
                  y=None, with_tail: bool = True, evaluator: FlowEvaluator | None = None) -> FlowField:
    """Sample ``psi = psi_m + h + eps zeta`` with ``(u, v) = (psi_y, -psi_x)``.

    ``window`` is ``X_max`` or ``(x0, x1)``; ``nx`` defaults to 32 samples per
    shortest base period and ``y`` to every 16th node of the equilibrium grid.
    """
    ev = evaluator or FlowEvaluator(result, with_tail)
    if window is None:
        window = default_window(ev.omega)
    x0, x1 = (0.0, float(window)) if np.isscalar(window) else map(float, window)
    if nx is None:
        nx = int(math.ceil(32 * (x1 - x0) * np.max(ev.omega) / (2 * math.pi))) + 1
    x = np.linspace(x0, x1, nx)
    if y is None:
        yh = result.family.eq.y[::16]
        y = np.concatenate([-yh[:0:-1], yh])
    y = np.asarray(y, dtype=float)
    f = ev.fields(x[None, :], y[:, None])
    return FlowField(x, y, f["psi"], f["psi_y"], -f["psi_x"], f["vorticity"], ev.eps, ev.omega, ev)


@dataclass
class StagnationPoint:
    location: tuple
    type: str
    jacobian_eigs: tuple
    trace: float = 0.0
    psi: float = 0.0

    def to_dict(self) -> dict:
        return {
            "x": self.location[0],
            "y": self.location[1],
            "type": self.type,
            "eigs": [[e.real, e.imag] for e in self.jacobian_eigs],
            "trace": self.trace,
            "psi": self.psi,
        }


def _newton_point(ev: FlowEvaluator, x: float, y: float, box, tol: float = 1e-12, max_iter: int = 40):
    for _ in range(max_iter):
        f = ev.fields(x, y)
        u, v = float(f["psi_y"]), -float(f["psi_x"])
        G = np.array([[f["psi_xy"], f["psi_yy"]], [-f["psi_xx"], -f["psi_xy"]]], dtype=float)
        try:
            dx, dy = np.linalg.solve(G, [-u, -v])
        except np.linalg.LinAlgError:
            return None
        x, y = x + dx, y + dy
        if not (box[0] <= x <= box[1] and -1.0 <= y <= 1.0):
            return None
        if abs(dx) + abs(dy) < tol * (1.0 + abs(x)):
            return x, y
    return None


def find_stagnation(flow: FlowField, tol: float = 1e-9) -> list[StagnationPoint]:
    """Zeros of the velocity seeded from grid cells where both components change sign."""
    if flow.eps == 0.0:
        warnings.warn("shear flow: stagnation points fill whole lines", DegenerateFieldWarning, stacklevel=2)
        return []
    ev = flow.evaluator
    u, v = flow.u, flow.v
    corners = lambda a: np.stack([a[:-1, :-1], a[1:, :-1], a[:-1, 1:], a[1:, 1:]])
    cu, cv = corners(u), corners(v)
    hit = (cu.min(0) <= 0) & (cu.max(0) >= 0) & (cv.min(0) <= 0) & (cv.max(0) >= 0)
    box = (flow.x[0], flow.x[-1])
    dx = float(np.diff(flow.x).min())
    found: list[StagnationPoint] = []
    for i, j in zip(*np.nonzero(hit)):
        x0 = 0.5 * (flow.x[j] + flow.x[j + 1])
        y0 = 0.5 * (flow.y[i] + flow.y[i + 1])
        pt = _newton_point(ev, x0, y0, box)
        if pt is None:
            log.info("stagnation seed (%.6g, %.6g) diverged; skipped", x0, y0)
            continue
        if any(abs(pt[0] - s.location[0]) < 1e-3 * dx and abs(pt[1] - s.location[1]) < 1e-6 for s in found):
            continue
        f = ev.fields(pt[0], pt[1])
        speed = max(abs(float(f["psi_y"])), abs(float(f["psi_x"])))
        if speed > tol:
            log.info("stagnation seed (%.6g, %.6g) converged to speed %.3e; skipped", x0, y0, speed)
            continue
        G = np.array([[f["psi_xy"], f["psi_yy"]], [-f["psi_xx"], float(f["v_y"])]], dtype=float)
        tr = float(np.trace(G))
        if abs(tr) > 1e-6 * np.abs(G).max():
            log.warning("velocity gradient trace %.3e at (%.6g, %.6g)", tr, *pt)
        # trace is zero up to interpolation error; classify the traceless part
        det = float(-f["psi_xy"] ** 2 + f["psi_xx"] * f["psi_yy"])
        disc = -det
        eigs = (complex(math.sqrt(disc)), complex(-math.sqrt(disc))) if disc >= 0 else \
            (complex(0, math.sqrt(-disc)), complex(0, -math.sqrt(-disc)))
        found.append(StagnationPoint((float(pt[0]), float(pt[1])), "saddle" if disc > 0 else "center", eigs,
                                     tr, float(f["psi"])))
    found.sort(key=lambda s: (round(s.location[1], 6), s.location[0]))
    return found


@dataclass
class LevelSet:
    level: float
    polylines: list
    closed: list

    def to_dict(self) -> dict:
        return {"level": self.level, "closed": self.closed,
                "polylines": [p.tolist() for p in self.polylines]}


def trace_level_sets(flow: FlowField, levels=None, seeds=None) -> list[LevelSet]:
    """Streamlines as contours of ``psi`` (marching squares on the samples).

    ``seeds`` are points ``(x, y)`` whose stream-function values become the levels.
    """
    if levels is None:
        if seeds is None:
            raise ValueError("give levels or seeds")
        seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
        levels = flow.evaluator.fields(seeds[:, 0], seeds[:, 1])["psi"]
    out = []
    ix = np.arange(flow.x.size)
    iy = np.arange(flow.y.size)
    cell = max(float(np.diff(flow.x).max()), float(np.diff(flow.y).max()))
    for lev in np.atleast_1d(levels):
        lines, closed = [], []
        for c in measure.find_contours(flow.psi, float(lev)):
            xy = np.column_stack([np.interp(c[:, 1], ix, flow.x), np.interp(c[:, 0], iy, flow.y)])
            lines.append(xy)
            closed.append(bool(np.hypot(*(xy[0] - xy[-1])) <= cell))
        out.append(LevelSet(float(lev), lines, closed))
    return out


def encircles(polyline: np.ndarray, point) -> bool:
    return bool(measure.points_in_poly(np.atleast_2d(point), polyline)[0])


def write_stagnation(points: list[StagnationPoint], path) -> None:
    with open(path, "w") as fh:
        json.dump([p.to_dict() for p in points], fh, indent=2)
