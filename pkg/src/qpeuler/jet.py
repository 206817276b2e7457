"""Truncated Taylor arithmetic, batched over evaluation points.

A :class:`Jet` stores normalized Taylor coefficients ``c[k] = f^(k)(x0)/k!``
in an array of shape ``(N + 1, *batch)``.  All operations are vectorized over
the trailing batch axes and loop only over the order, so the cost is
``O(N^2)`` array operations regardless of how many base points are carried.

Elementary functions are propagated with the usual first-order ODE
recurrences (``exp' = a' exp`` and friends), which is exact up to rounding.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import SingularJetError

__all__ = ["Jet", "jet_eval", "cosh", "sinh", "tanh", "exp", "log", "logcosh", "expit"]


def _cauchy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = min(a.shape[0], b.shape[0])
    shape = (n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.empty(shape)
    for k in range(n):
        out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0) if k else a[0] * b[0]
    return out


class Jet:
    __slots__ = ("c",)
    __array_priority__ = 100

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 0:
            c = c[None]
        self.c = c

    @classmethod
    def variable(cls, base, order: int) -> "Jet":
        base = np.asarray(base, dtype=float)
        c = np.zeros((order + 1,) + base.shape)
        c[0] = base
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + value.shape)
        c[0] = value
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def derivatives(self) -> np.ndarray:
        """Return ``f^(k)(x0)`` for ``k = 0..N`` (unnormalized)."""
        fact = np.array([math.factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.c * fact.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def __call__(self, x):
        """Evaluate the truncated polynomial at offset ``x`` from the base point."""
        out = np.zeros(np.broadcast_shapes(self.c.shape[1:], np.shape(x)))
        for k in range(self.order, -1, -1):
            out = out * x + self.c[k]
        return out

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, c0={self.c[0]!r})"

    # --- arithmetic -------------------------------------------------------

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        other = np.asarray(other, dtype=float)
        c = np.zeros((self.c.shape[0],) + np.broadcast_shapes(self.c.shape[1:], other.shape))
        c[0] = other
        return Jet(c)

    def __add__(self, other):
        o = self._lift(other)
        n = min(self.order, o.order) + 1
        return Jet(self.c[:n] + o.c[:n])

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * np.asarray(other, dtype=float))
        return Jet(_cauchy(self.c, other.c))

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        a = self.c
        if np.any(a[0] == 0.0):
            raise SingularJetError("reciprocal of a jet with zero constant term")
        b = np.empty_like(a)
        b[0] = 1.0 / a[0]
        for k in range(1, a.shape[0]):
            b[k] = -np.sum(a[1 : k + 1] * b[k - 1 :: -1][:k], axis=0) * b[0]
        return Jet(b)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if np.any(other == 0.0):
                raise SingularJetError("division by zero constant")
            return Jet(self.c / other)
        a, b = self.c, other.c
        if np.any(b[0] == 0.0):
            raise SingularJetError("division by a jet with zero constant term")
        n = min(a.shape[0], b.shape[0])
        q = np.empty((n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
        for k in range(n):
            s = a[k] - (np.sum(b[1 : k + 1] * q[k - 1 :: -1][:k], axis=0) if k else 0.0)
            q[k] = s / b[0]
        return Jet(q)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            result = Jet.constant(np.ones(self.c.shape[1:]), self.order)
            base = self
            while p:
                if p & 1:
                    result = result * base
                base = base * base
                p >>= 1
            return result
        a = self.c
        if np.any(a[0] == 0.0):
            raise SingularJetError("non-integer power of a jet with zero constant term")
        p = float(p)
        b = np.empty_like(a)
        b[0] = a[0] ** p
        for k in range(1, a.shape[0]):
            j = np.arange(1, k + 1).reshape((-1,) + (1,) * (a.ndim - 1))
            b[k] = np.sum(((p + 1.0) * j - k) * a[1 : k + 1] * b[k - 1 :: -1][:k], axis=0) / (k * a[0])
        return Jet(b)

    # --- elementary functions ----------------------------------------------

    def _ode(self, f0, rhs_factor: Callable[[np.ndarray, int], np.ndarray]) -> "Jet":
        # f' = a' * w(f): k f_k = sum_{j=1..k} j a_j w_{k-j}
        a = self.c
        f = np.empty_like(a)
        f[0] = f0
        jj = np.arange(a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
        da = jj * a
        for k in range(1, a.shape[0]):
            w = rhs_factor(f, k)
            f[k] = np.sum(da[1 : k + 1] * w[k - 1 :: -1][:k], axis=0) / k
        return Jet(f)

    def exp(self) -> "Jet":
        return self._ode(np.exp(self.c[0]), lambda f, k: f[:k])

    def log(self) -> "Jet":
        a = self.c
        if np.any(a[0] <= 0.0):
            raise SingularJetError("log of a jet with non-positive constant term")
        l = _log_tail(self).c
        l[0] = np.log(a[0])
        return Jet(l)

    def cosh(self) -> "Jet":
        return self._pair(np.cosh, np.sinh, sign=1.0)[0]

    def sinh(self) -> "Jet":
        return self._pair(np.cosh, np.sinh, sign=1.0)[1]

    def cos(self) -> "Jet":
        return self._pair(np.cos, np.sin, sign=-1.0)[0]

    def sin(self) -> "Jet":
        return self._pair(np.cos, np.sin, sign=-1.0)[1]

    def _pair(self, fc, fs, sign):
        # C' = sign * a' S, S' = a' C
        a = self.c
        C = np.empty_like(a)
        S = np.empty_like(a)
        C[0] = fc(a[0])
        S[0] = fs(a[0])
        jj = np.arange(a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
        da = jj * a
        for k in range(1, a.shape[0]):
            C[k] = sign * np.sum(da[1 : k + 1] * S[k - 1 :: -1][:k], axis=0) / k
            S[k] = np.sum(da[1 : k + 1] * C[k - 1 :: -1][:k], axis=0) / k
        return Jet(C), Jet(S)

    def tanh(self) -> "Jet":
        def w(f, k):
            sq = _cauchy(f[:k], f[:k])
            sq[0] = 1.0 - sq[0]
            sq[1:] = -sq[1:]
            return sq

        return self._ode(np.tanh(self.c[0]), w)

    def expit(self) -> "Jet":
        """Logistic function ``1/(1+exp(-a))``, stable for large ``|a|``.

        The factor ``s(1-s)`` in ``s' = a' s (1-s)`` is formed from the
        complementary series ``1-s`` evaluated directly, so derivatives stay
        accurate when ``s`` rounds to 0 or 1.
        """
        from scipy.special import expit as _expit

        a0 = self.c[0]
        sbar0 = _expit(-a0)

        def w(f, k):
            fb = -f[:k].copy()
            fb[0] = sbar0
            return _cauchy(f[:k], fb)

        return self._ode(_expit(a0), w)

    def logcosh(self) -> "Jet":
        a0 = self.c[0]
        t = np.abs(a0)
        L0 = t + np.log1p(np.exp(-2.0 * t)) - math.log(2.0)
        T = self.tanh().c
        a = self.c
        f = np.empty_like(a)
        f[0] = L0
        jj = np.arange(a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
        da = jj * a
        for k in range(1, a.shape[0]):
            f[k] = np.sum(da[1 : k + 1] * T[k - 1 :: -1][:k], axis=0) / k
        return Jet(f)

    def sqrt(self) -> "Jet":
        return self ** 0.5

    def compose(self, outer: np.ndarray) -> "Jet":
        """Return ``g(a)`` where ``outer[k]`` are Taylor coefficients of ``g`` at ``a0``."""
        d = self - self.c[0]
        out = Jet.constant(np.zeros(self.c.shape[1:]), self.order)
        outer = np.asarray(outer, dtype=float)
        for k in range(min(outer.shape[0], self.order + 1) - 1, -1, -1):
            out = out * d + outer[k]
        return out


def _log_tail(a: Jet) -> Jet:
    c = a.c
    l = np.zeros_like(c)
    for k in range(1, c.shape[0]):
        j = np.arange(1, k).reshape((-1,) + (1,) * (c.ndim - 1))
        s = np.sum(j * l[1:k] * c[k - 1 : 0 : -1], axis=0) if k > 1 else 0.0
        l[k] = (c[k] - s / k) / c[0]
    return Jet(l)


def _dispatch(name):
    npf = {"cosh": np.cosh, "sinh": np.sinh, "tanh": np.tanh, "exp": np.exp, "log": np.log}.get(name)

    def f(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        if name == "logcosh":
            t = np.abs(x)
            return t + np.log1p(np.exp(-2.0 * t)) - math.log(2.0)
        if name == "expit":
            from scipy.special import expit as _expit

            return _expit(x)
        return npf(x)

    f.__name__ = name
    return f


cosh = _dispatch("cosh")
sinh = _dispatch("sinh")
tanh = _dispatch("tanh")
exp = _dispatch("exp")
log = _dispatch("log")
logcosh = _dispatch("logcosh")
expit = _dispatch("expit")


def jet_eval(expression: Callable[[Jet], Jet], base, order: int) -> Jet:
    """Evaluate ``expression`` on the identity jet at ``base`` to ``order``."""
    if order < 0:
        raise ValueError("order must be non-negative")
    out = expression(Jet.variable(base, order))
    if not isinstance(out, Jet):
        out = Jet.constant(out, order)
    return out
