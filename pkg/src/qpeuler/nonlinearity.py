"""Strip-wise nonlinearities ``F_p`` with ``psi'' = F_p(psi)``, their
regularization near critical values, the shift ``h`` and the rescaled remainder.

Every ``F_p`` is evaluated by inverting ``psi`` with local Taylor expansions
at grid nodes.  Close to a critical point ``psi'`` vanishes and the inversion
switches to an even chart in ``s = (y - y_p)^2``, which also continues ``F_p``
a little past the critical value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import kernels
from .errors import (
    ChartError,
    ContractionError,
    DomainError,
    EtaTooLargeError,
    StripMonotonicityError,
)
from .jet import Jet
from .shear import ShearEquilibrium, taylor_at_critical
from .spectrum import apply_Lm_inverse

__all__ = [
    "EdgeChart",
    "StripNonlinearity",
    "Nonlinearity",
    "RegularizedFamily",
    "build_strip_nonlinearities",
    "eval_F_derivative",
    "chi",
    "regularize",
    "default_eta",
    "solve_shift",
    "shift_residual",
    "eval_q_eps",
]

JET_ORDER = 16
CHART_ORDER = 12


# --- series helpers ----------------------------------------------------------


def _shift(c: np.ndarray, x) -> np.ndarray:
    """Coefficients of ``p(x + u)`` in ``u`` for ``p(u) = sum c_k u^k`` (batched)."""
    d = np.array(c, dtype=float, copy=True)
    n = d.shape[0] - 1
    x = np.asarray(x, dtype=float)
    d = d * np.ones((1,) + np.broadcast_shapes(d.shape[1:], x.shape))
    for i in range(n):
        for k in range(n - 1, i - 1, -1):
            d[k] = d[k] + x * d[k + 1]
    return d


def _horner(c: np.ndarray, x) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(c.shape[1:], np.shape(x)))
    for k in range(c.shape[0] - 1, -1, -1):
        out = out * x + c[k]
    return out


def _revert_compose(pc: np.ndarray, fc: np.ndarray, n: int) -> Jet:
    """Jet in ``tau`` of ``f(u(tau))`` where ``p(u(tau)) = tau``; ``pc[0] = 0``."""
    batch = pc.shape[1:]
    tau = Jet.variable(np.zeros(batch), n)
    dp = (np.arange(1, pc.shape[0]).reshape((-1,) + (1,) * len(batch)) * pc[1:])
    u = tau * (1.0 / pc[1])
    for _ in range(max(1, math.ceil(math.log2(n + 1))) + 1):
        u = u - (u.compose(pc) - tau) / u.compose(dp)
    return u.compose(fc)


# --- cut-off ------------------------------------------------------------------


def chi(t, order: int = 0):
    """Even C^inf cut-off: 1 on ``|t| <= 1``, 0 on ``|t| >= 2``, monotone between.

    With ``order > 0`` a :class:`Jet` in ``t`` is returned.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    sgn = np.where(t < 0, -1.0, 1.0)
    mid = (a > 1.0) & (a < 2.0)
    out = np.zeros((order + 1,) + t.shape)
    out[0] = np.where(a <= 1.0, 1.0, 0.0)
    if np.any(mid):
        u = Jet.variable(a[mid] - 1.0, order)
        # d/d|t| = sgn * d/dt, so odd coefficients pick up the sign of t
        f1 = (-(u.reciprocal())).exp()
        f0 = (-((1.0 - u).reciprocal())).exp()
        c = (f0 / (f0 + f1)).c
        for k in range(order + 1):
            out[k][mid] = c[k] * sgn[mid] ** k
    return Jet(out) if order else out[0]


# --- charts and strips -------------------------------------------------------


@dataclass
class EdgeChart:
    """``psi(y_c + d) = A(d^2)`` and ``psi''(y_c + d) = G(d^2)`` near a critical point."""

    yc: float
    psi_c: float
    a: np.ndarray
    g: np.ndarray
    radius: float
    odd_ratio: float

    @property
    def curvature(self) -> float:
        return 2.0 * self.a[1]

    def s_of(self, t) -> np.ndarray:
        """Solve ``A(s) = t``; negative ``s`` continues past the critical value."""
        t = np.asarray(t, dtype=float)
        dt = t - self.psi_c
        s = dt / self.a[1]
        da = np.arange(1, self.a.size) * self.a[1:]
        for _ in range(60):
            f = _horner(self.a[1:, None], s.ravel()[None]).reshape(s.shape) * s - dt
            df = _horner(da[:, None], s.ravel()[None]).reshape(s.shape)
            step = f / df
            s = s - step
            if np.all(np.abs(step) <= 4e-16 * np.maximum(np.abs(s), 1e-300)):
                break
        if np.any(np.abs(s) > self.radius):
            raise ChartError(f"chart at y={self.yc:.6f} asked for |s|={np.abs(s).max():.3e} > {self.radius:.3e}")
        return s

    def increment(self, s0, delta) -> np.ndarray:
        """``G(s1) - G(s0)`` where ``A(s1) - A(s0) = delta``, in difference form."""
        s0 = np.asarray(s0, dtype=float)
        delta = np.asarray(delta, dtype=float)
        ac = _shift(self.a[:, None], s0)
        gc = _shift(self.g[:, None], s0)
        ac[0] = 0.0
        da = np.arange(1, ac.shape[0]).reshape(-1, 1) * ac[1:]
        sig = delta / ac[1]
        for _ in range(60):
            step = (_horner(ac, sig) - delta) / _horner(da, sig)
            sig = sig - step
            if np.all(np.abs(step) <= 4e-16 * np.maximum(np.abs(sig), 1e-300)):
                break
        if np.any(np.abs(s0 + sig) > self.radius):
            raise ChartError(f"chart at y={self.yc:.6f} left its radius {self.radius:.3e}")
        return _horner(gc[1:], sig) * sig

    def F(self, t, n: int = 0):
        s = self.s_of(t)
        if n == 0:
            return _horner(self.g[:, None], s.ravel()[None]).reshape(s.shape)
        flat = s.ravel()
        ac = _shift(self.a[:, None], flat)
        gc = _shift(self.g[:, None], flat)
        ac[0] = 0.0
        return Jet(_revert_compose(ac, gc, n).c.reshape((n + 1,) + s.shape))


def _make_chart(eq: ShearEquilibrium, p: int) -> EdgeChart:
    c = taylor_at_critical(eq, p, CHART_ORDER, full=True)
    even = c[0::2]
    odd = np.abs(c[1::2]).max() / max(np.abs(even[1:]).max(), 1e-300)
    k = np.arange(even.size - 1)
    g = (2 * k + 2) * (2 * k + 1) * even[1:]
    g = np.concatenate([g, [0.0]])
    # root test on the tail bounds the radius of convergence in s
    tail = [abs(even[1] / even[k]) ** (1.0 / (k - 1)) for k in range(CHART_ORDER // 2, even.size) if even[k] != 0]
    radius = 0.25 * min(tail) if tail else math.inf
    return EdgeChart(float(eq.critical_points[p]), float(even[0]), even, g, radius, float(odd))


@dataclass
class StripNonlinearity:
    """``F_p`` on the strip ``y_lo <= |y| <= y_hi``."""

    p: int
    y_lo: float
    y_hi: float
    i_lo: int
    i_hi: int
    psi_range: tuple
    increasing: bool
    interpolant: PchipInterpolator
    edge_charts: tuple
    delta_bar: float

    def in_range(self, t) -> np.ndarray:
        lo, hi = self.psi_range
        return (t >= lo) & (t <= hi)


class Nonlinearity:
    """All strip functions of one equilibrium plus the shared evaluation machinery."""

    def __init__(self, eq: ShearEquilibrium, rho_cells: int = 16):
        if eq.critical_points is None:
            raise ValueError("equilibrium has no critical points; solve with locate=True")
        self.eq = eq
        self.h = eq.h
        self.rho = rho_cells * eq.h
        y = eq.y
        self.charts = [_make_chart(eq, p) for p in range(eq.kappa0 + 1)]
        self.delta_c = self.rho
        ends = list(eq.critical_points) + [1.0]
        self.strips = []
        for p in range(eq.kappa0 + 1):
            lo, hi = ends[p], ends[p + 1]
            i_lo = int(np.searchsorted(y, lo, side="left"))
            i_hi = int(np.searchsorted(y, hi, side="right")) - 1
            seg = eq.psi[i_lo : i_hi + 1]
            d = np.diff(seg)
            inc = bool(np.sum(d) > 0)
            # only interior differences must be strict; cells touching a critical point may be flat
            inner = d[1:-1] if d.size > 2 else d
            if np.any((inner <= 0) if inc else (inner >= 0)):
                raise StripMonotonicityError(f"psi is not monotone inside strip {p}")
            yy = np.concatenate([[lo], y[i_lo : i_hi + 1], [hi]])
            vals = eq.evaluate(np.array([lo, hi]), 2)
            pp = np.concatenate([[vals[0, 0]], seg, [vals[0, 1]]])
            ff = np.concatenate([[vals[2, 0]], eq.d2psi[i_lo : i_hi + 1], [vals[2, 1]]])
            keep = np.concatenate([[True], np.diff(pp) != 0])
            pp, ff = pp[keep], ff[keep]
            order = np.argsort(pp)
            interp = PchipInterpolator(pp[order], ff[order])
            charts = (self.charts[p], self.charts[p + 1] if p < eq.kappa0 else None)
            rng = (float(min(vals[0])), float(max(vals[0])))
            self.strips.append(StripNonlinearity(p, lo, hi, i_lo, i_hi, rng, inc, interp, charts, self.delta_c))
        self.node_strip = np.empty(y.size, dtype=int)
        for s in self.strips:
            self.node_strip[s.i_lo : s.i_hi + 1] = s.p
        cp = np.asarray(eq.critical_points)
        dist = np.min(np.abs(y[:, None] - cp[None, :]), axis=1)
        self.near_chart = np.argmin(np.abs(y[:, None] - cp[None, :]), axis=1)
        self.near_mask = dist <= 2 * self.delta_c
        self._jets = {}

    # --- jets -------------------------------------------------------------

    def jets(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        if idx.size <= 64:
            return self.eq.node_jets(idx, JET_ORDER)
        key = idx.tobytes()
        if key not in self._jets:
            self._jets[key] = self.eq.node_jets(idx, JET_ORDER)
        return self._jets[key]

    # --- absolute evaluation ----------------------------------------------

    def _chart_zone(self, strip: StripNonlinearity, t):
        """Index (0 lower, 1 upper, -1 none) of the chart that owns target ``t``."""
        zone = np.full(np.shape(t), -1)
        for k, ch in enumerate(strip.edge_charts):
            if ch is None:
                continue
            sgn = np.sign(ch.curvature)
            tau = 0.5 * abs(ch.curvature) * self.delta_c**2
            zone = np.where((t - ch.psi_c) * sgn <= tau, k, zone)
        return zone

    def F(self, p: int, t, n: int = 0):
        """``F_p`` at ``t`` (array), or a :class:`Jet` of order ``n`` in ``t``."""
        strip = self.strips[p]
        t = np.asarray(t, dtype=float)
        shape = t.shape
        t = t.ravel()
        out = np.empty((n + 1, t.size))
        zone = self._chart_zone(strip, t)
        for k in (0, 1):
            m = zone == k
            if np.any(m):
                val = strip.edge_charts[k].F(t[m], n)
                out[:, m] = val.c if n else val
        m = zone < 0
        if np.any(m):
            out[:, m] = self._global(strip, t[m], n)
        if n == 0:
            return out[0].reshape(shape)
        return Jet(out.reshape((n + 1,) + shape))

    def _global(self, strip: StripNonlinearity, t, n: int):
        eq = self.eq
        lo, hi = strip.i_lo, strip.i_hi
        seg = eq.psi[lo : hi + 1]
        tol = 1e-12 * max(1.0, abs(seg).max())
        lo_t, hi_t = strip.psi_range
        if strip.p == eq.kappa0:
            # the outer strip ends at the wall, not at a critical point; allow a short continuation
            ext = self.rho * abs(eq.dpsi[-1])
            if strip.increasing:
                hi_t += ext
            else:
                lo_t -= ext
        if np.any((t > hi_t + tol) | (t < lo_t - tol)):
            raise DomainError(f"psi value outside the range of strip {strip.p}")
        key = seg if strip.increasing else -seg
        tk = t if strip.increasing else -t
        j = np.clip(np.searchsorted(key, tk) - 1, 0, seg.size - 2)
        # nearest of the two bracketing nodes
        near = np.where(np.abs(seg[j + 1] - t) < np.abs(seg[j] - t), j + 1, j)
        base = lo + near
        c = self.jets(base)
        y0 = eq.y[base]
        a = np.maximum(eq.y[lo + j] - y0, strip.y_lo - y0)
        b = np.minimum(eq.y[lo + j + 1] - y0, strip.y_hi - y0)
        if strip.p == eq.kappa0:
            b = np.where(lo + j + 1 == eq.y.size - 1, b + self.rho, b)
        x = kernels.taylor_invert(c, t, np.minimum(a, b), np.maximum(a, b))
        if n == 0:
            return self._d2(c, x)[None]
        sc = _shift(c, x)
        pc = sc.copy()
        pc[0] = 0.0
        k = np.arange(sc.shape[0] - 2).reshape(-1, 1)
        fc = (k + 2) * (k + 1) * sc[2:]
        return _revert_compose(pc, fc, n).c

    @staticmethod
    def _d2(c, x):
        k = np.arange(c.shape[0] - 2).reshape(-1, 1)
        return _horner((k + 2) * (k + 1) * c[2:], x)

    # --- increments relative to grid nodes ------------------------------------

    def increment(self, idx, delta) -> np.ndarray:
        """``F_p(psi_i + delta) - psi''_i`` for node indices ``idx`` (broadcast with ``delta``).

        Away from critical points the same local expansion carries both values, so
        the increment is accurate relative to its own size.  Near a critical
        point the chart does the same in ``s = (y - y_p)^2``.
        """
        return self._at_nodes(idx, delta, derivative=False)

    def dF(self, idx, delta) -> np.ndarray:
        """``F_p'(psi_i + delta)`` at nodes ``idx``."""
        return self._at_nodes(idx, delta, derivative=True)

    def _at_nodes(self, idx, delta, derivative: bool, chunk: int = 1 << 17) -> np.ndarray:
        I, D = np.broadcast_arrays(np.asarray(idx, dtype=int), np.asarray(delta, dtype=float))
        shape = I.shape
        I, D = I.ravel(), D.ravel()
        nodes, inv = np.unique(I, return_inverse=True)
        jets = self.jets(nodes)
        out = np.empty(I.size)
        for s in range(0, I.size, chunk):
            sl = slice(s, s + chunk)
            out[sl] = self._node_chunk(I[sl], D[sl], jets[:, inv[sl]], derivative)
        return out.reshape(shape)

    def _node_chunk(self, I, D, c, derivative: bool) -> np.ndarray:
        eq = self.eq
        out = np.empty(I.size)
        done = self.near_mask[I].copy()
        if np.any(done):
            sel = np.nonzero(done)[0]
            which = self.near_chart[I[sel]]
            for q in np.unique(which):
                m = sel[which == q]
                ch = self.charts[q]
                if derivative:
                    out[m] = ch.F(eq.psi[I[m]] + D[m], 1).c[1]
                else:
                    out[m] = ch.increment((eq.y[I[m]] - ch.yc) ** 2, D[m])
        far = np.nonzero(~done)[0]
        if far.size:
            cf = c[:, far].copy()
            c0 = cf[0].copy()
            cf[0] = 0.0
            Df = D[far]
            x = kernels.taylor_invert(cf, Df, np.full(far.size, -self.rho), np.full(far.size, self.rho))
            ok = np.abs(_horner(cf, x) - Df) <= 1e-13 * np.maximum(np.abs(Df), np.abs(c0) * 1e-3) + 1e-300
            ok &= np.abs(x) < self.rho * (1 - 1e-12)
            k = np.arange(cf.shape[0]).reshape(-1, 1)
            if derivative:
                # F' = psi''' / psi' at the preimage
                d1 = _horner(k[1:] * cf[1:], x)
                d3 = _horner(k[3:] * (k[3:] - 1) * (k[3:] - 2) * cf[3:], x)
                val = d3 / d1
            else:
                d2 = k[2:] * (k[2:] - 1) * cf[2:]
                val = _horner(d2[1:], x) * x
            out[far[ok]] = val[ok]
            done[far[ok]] = True
        rest = np.nonzero(~done)[0]
        if rest.size:
            ps = self.node_strip[I[rest]]
            for p in np.unique(ps):
                m = rest[ps == p]
                t = eq.psi[I[m]] + D[m]
                if derivative:
                    out[m] = self.F(int(p), t, 1).c[1]
                else:
                    out[m] = self.F(int(p), t) - eq.d2psi[I[m]]
        return out

    def write_csv(self, path, samples: int = 400) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "psi", "F"])
            for s in self.strips:
                t = np.linspace(*s.psi_range, samples)
                for ti, fi in zip(t, self.F(s.p, t)):
                    w.writerow([s.p, ti, fi])


def build_strip_nonlinearities(eq: ShearEquilibrium) -> Nonlinearity:
    return Nonlinearity(eq)


def eval_F_derivative(nl: Nonlinearity, p: int, t, n: int) -> np.ndarray:
    """``d^n F_p / d psi^n`` at ``t``."""
    if n == 0:
        return nl.F(p, t)
    return nl.F(p, t, n).derivatives()[n]


# --- regularization -------------------------------------------------------------


def _separations(nl: Nonlinearity) -> np.ndarray:
    vals = [c.psi_c for c in nl.charts] + [float(nl.eq.psi[-1])]
    return np.abs(np.diff(vals))


def default_eta(nl: Nonlinearity, eps: float, S: int) -> float:
    """``eps^(1/S)`` capped so the blend stays where both branches are still mirror images.

    The cap is 1/16 of the smallest distance from a critical value to the
    neighbouring critical value or to the value at the well edge.
    """
    eq = nl.eq
    cap = _separations(nl).min()
    if eq.r < 1.0:
        psi_r = float(eq.evaluate(np.array([eq.r]), 0)[0, 0])
        cap = min(cap, min(abs(c.psi_c - psi_r) for c in nl.charts[1:]) if len(nl.charts) > 1 else cap)
    return float(min(eps ** (1.0 / S), cap / 16.0))


@dataclass
class RegularizedFamily:
    nl: Nonlinearity
    eta: float
    S: int = 3
    shift: np.ndarray = field(default=None)
    forcing: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        sep = _separations(self.nl)
        if 4.0 * self.eta >= sep.min():
            raise EtaTooLargeError(f"4*eta={4 * self.eta:.3e} reaches the separation {sep.min():.3e} of critical values")

    @property
    def eq(self):
        return self.nl.eq

    def blend(self, p: int, t, n: int = 0):
        """``F_{p,eta} - F_p`` at ``t``: zero unless ``t`` is within ``2 eta`` of an end value."""
        nl = self.nl
        k0 = self.eq.kappa0
        t = np.asarray(t, dtype=float)
        out = Jet(np.zeros((n + 1,) + t.shape)) if n else np.zeros(t.shape)
        for side, q in ((0, p - 1), (1, p + 1)):
            if q < 0 or q > k0 or (side == 1 and p == k0):
                continue
            pc = nl.charts[p + side].psi_c
            m = np.abs(t - pc) < 2.0 * self.eta
            if not np.any(m):
                continue
            tm = t[m]
            if n == 0:
                w = 0.5 * chi((tm - pc) / self.eta)
                gap = nl.F(q, tm) - nl.F(p, tm)
                out[m] += w * gap
            else:
                cj = chi((tm - pc) / self.eta, n)
                scale = self.eta ** -np.arange(n + 1).reshape((-1,) + (1,) * tm.ndim)
                w = Jet(0.5 * cj.c * scale)
                gap = nl.F(q, tm, n) - nl.F(p, tm, n)
                out.c[:, m] += (w * gap).c
        return out

    def F_eta(self, p: int, t, n: int = 0):
        """``F_{p,eta}`` written as a weighted sum so that adjacent strips agree bitwise
        where both cut-offs equal one."""
        nl = self.nl
        k0 = self.eq.kappa0
        t = np.asarray(t, dtype=float)
        if n:
            return nl.F(p, t, n) + self.blend(p, t, n)
        wa = np.zeros(t.shape)
        wb = np.zeros(t.shape)
        if p > 0:
            wa = 0.5 * chi((t - nl.charts[p].psi_c) / self.eta)
        if p < k0:
            wb = 0.5 * chi((t - nl.charts[p + 1].psi_c) / self.eta)
        res = (1.0 - wa - wb) * nl.F(p, t)
        if np.any(wa > 0):
            m = wa > 0
            res[m] = res[m] + wa[m] * nl.F(p - 1, t[m])
        if np.any(wb > 0):
            m = wb > 0
            res[m] = res[m] + wb[m] * nl.F(p + 1, t[m])
        return res

    def _blend_nodes(self, idx, delta, n: int = 0):
        idx = np.asarray(idx, dtype=int)
        I, D = np.broadcast_arrays(idx, np.asarray(delta, dtype=float))
        out = np.zeros(I.shape)
        ps = self.nl.node_strip[I]
        t = self.eq.psi[I] + D
        for p in np.unique(ps):
            m = ps == p
            b = self.blend(int(p), t[m], n)
            out[m] = b.c[n] * math.factorial(n) if n else b
        return out

    def forcing_at(self, idx) -> np.ndarray:
        """``f_eta = F_{p,eta}(psi) - F_p(psi)`` at nodes."""
        return self._blend_nodes(idx, 0.0)

    def g(self, idx, base, phi) -> np.ndarray:
        """``F_eta(psi + base + phi) - F_eta(psi + base) - Q phi`` at nodes ``idx``."""
        nl = self.nl
        q = self.eq.q[np.asarray(idx, dtype=int)]
        d1 = nl.increment(idx, base + phi) + self._blend_nodes(idx, base + phi)
        d0 = nl.increment(idx, base) + self._blend_nodes(idx, base)
        return (d1 - d0) - q * phi

    def dg(self, idx, base, phi) -> np.ndarray:
        """``F_eta'(psi + base + phi) - Q`` at nodes ``idx``."""
        q = self.eq.q[np.asarray(idx, dtype=int)]
        return self.nl.dF(idx, base + phi) + self._blend_nodes(idx, base + phi, 1) - q


def regularize(nl: Nonlinearity, eta: float, S: int = 3) -> RegularizedFamily:
    return RegularizedFamily(nl, eta, S)


def solve_shift(family: RegularizedFamily, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Picard iteration ``h <- (-L)^{-1}(f + g(., h))`` on the half grid.

    ``g(y, h) = F_eta(psi + h) - F_eta(psi) - Q h`` so the fixed point satisfies
    ``h'' - Q h = f + g``, that is ``(psi + h)'' = F_eta(psi + h)``.
    """
    eq = family.eq
    idx = np.arange(eq.y.size)
    f = family.forcing_at(idx)
    pot = eq.potential
    h = np.zeros(eq.y.size)
    if not np.any(f):
        family.shift, family.forcing = h, f
        return h
    prev = math.inf
    grows = 0
    converged = False
    for _ in range(max_iter):
        rhs = f + family.g(idx, 0.0, h)
        new = -apply_Lm_inverse(pot, rhs, grid=eq.grid, check=False)
        step = float(np.abs(new - h).max())
        h = new
        # past the tolerance, keep going while the step still halves: the FD residual
        # sees the last step amplified by 1/h^2
        if converged and step > 0.5 * prev:
            break
        converged = converged or step < tol
        if step == 0.0:
            break
        grows = grows + 1 if step > prev else 0
        if grows >= 2:
            raise ContractionError(f"shift iteration step grew twice (last {step:.3e})")
        prev = step
    if not converged:
        raise ContractionError(f"shift iteration did not reach {tol:g} in {max_iter} steps")
    family.shift, family.forcing = h, f
    return h


def shift_residual(family: RegularizedFamily) -> float:
    """``max |-L h - g(., h) - f|`` with the same FD operator as the solve."""
    eq = family.eq
    h, f = family.shift, family.forcing
    idx = np.arange(eq.y.size)
    H = eq.h
    lap = np.empty_like(h)
    lap[1:-1] = (h[2:] - 2 * h[1:-1] + h[:-2]) / H**2
    lap[0] = 2 * (h[1] - h[0]) / H**2
    Lh = -lap + eq.q * h
    r = -Lh - family.g(idx, 0.0, h) - f
    return float(np.abs(r[:-1]).max())


def eval_q_eps(family: RegularizedFamily, eps: float, idx, zeta) -> np.ndarray:
    """``eps^{-3/2} (g(y, h + eps zeta) - g(y, h))`` at nodes ``idx``."""
    h = family.shift if family.shift is not None else np.zeros(family.eq.y.size)
    idx = np.asarray(idx, dtype=int)
    base = h[idx]
    if eps == 0:
        return np.zeros(np.broadcast_shapes(idx.shape, np.shape(zeta)))
    return family.g(idx, base, eps * np.asarray(zeta, dtype=float)) / eps**1.5
