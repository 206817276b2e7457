"""Analytic well potential with a Hermite corrector at the shear critical points.

The potential is ``Q(y) = -E^2 (h(y/r) + g(y/r))`` where ``h`` is the smoothed
indicator ``1/((cosh z / cosh 1)^m + 1)`` of the well ``|z| < 1`` and ``g`` is
an even corrector chosen so that all odd derivatives of ``h + g`` up to order
``2S - 1`` vanish at prescribed anchors ``+-z_j``.

The corrector is assembled anchor by anchor.  For anchor ``z_j`` the basis
functions are ``(z - z_j)^(2k-1)/(2k-1)! * fhat_j(z)`` where ``fhat_j`` vanishes
to order ``2S`` at every other anchor, so the interpolation conditions
decouple and the coefficients follow from a lower-triangular forward
substitution.  ``fhat_j`` carries a Gaussian weight centred on ``z_j``; it keeps
the corrector bounded on ``|z| <= 1/r`` without changing the triangular
structure (see the decisions ledger).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateAnchorError, SingularPointError
from .jet import Jet, expit, logcosh

__all__ = [
    "PotentialSpec",
    "Corrector",
    "Potential",
    "ConstantPotential",
    "StepPotential",
    "h_profile",
    "build_corrector",
    "eval_Q",
    "eval_Q_infty",
    "depth_from_width",
]

_LOGCOSH1 = float(logcosh(1.0))


def depth_from_width(kappa0: int, r: float) -> float:
    """Depth ``E`` fixed by the constraint ``E r = (kappa0 + 1/4) pi``."""
    return (kappa0 + 0.25) * math.pi / r


@dataclass(frozen=True)
class PotentialSpec:
    E: float
    r: float
    m: int
    S: int
    kappa0: int
    T: float
    gamma: float

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ConfigError("r must lie in (0, 1)")
        if self.kappa0 < 1:
            raise ConfigError("kappa0 must be at least 1")
        if self.S < 1:
            raise ConfigError("S must be at least 1")
        if self.m < 1:
            raise ConfigError("m must be a positive integer")
        if abs(self.E * self.r - (self.kappa0 + 0.25) * math.pi) > 1e-12 * max(1.0, self.E):
            raise ConfigError("E r must equal (kappa0 + 1/4) pi")
        if not self.T > 1.0 / self.r:
            raise ConfigError("T must exceed 1/r")
        if abs(self.gamma - self.r**5) > 1e-15:
            raise ConfigError("gamma must equal r^5")

    @classmethod
    def from_width(cls, kappa0: int, r: float, m: int, S: int = 3, T: float | None = None) -> "PotentialSpec":
        r = float(r)
        return cls(
            E=depth_from_width(kappa0, r),
            r=r,
            m=int(m),
            S=int(S),
            kappa0=int(kappa0),
            T=float(T if T is not None else max(4.0, 4.0 / r)),
            gamma=r**5,
        )

    def with_m(self, m: int) -> "PotentialSpec":
        return PotentialSpec.from_width(self.kappa0, self.r, m, self.S, self.T)

    def with_depth(self, E: float) -> "PotentialSpec":
        """Same family at another depth (the width follows from the constraint)."""
        r = (self.kappa0 + 0.25) * math.pi / E
        return PotentialSpec(E=E, r=r, m=self.m, S=self.S, kappa0=self.kappa0,
                             T=max(self.T, 4.0 / r * (1 + 1e-12)), gamma=r**5)

    def limit_anchors(self) -> np.ndarray:
        return np.arange(1, self.kappa0 + 1) * math.pi / self.E


def h_profile(z, m: int, order: int = 0) -> Jet:
    """Jet of ``h_m(z) = 1/((cosh z/cosh 1)^m + 1)`` at ``z`` (overflow-free form)."""
    zj = z if isinstance(z, Jet) else Jet.variable(z, order)
    return expit(-float(m) * (logcosh(zj) - _LOGCOSH1))


def _h_values(z, m):
    return expit(-float(m) * (logcosh(np.asarray(z, dtype=float)) - _LOGCOSH1))


@dataclass(frozen=True)
class Corrector:
    anchors: tuple
    coefficients: np.ndarray
    S: int
    r: float
    T: float
    sigma: float
    m: int = 0
    rhs: np.ndarray = field(default=None, repr=False)

    @property
    def z_anchors(self) -> np.ndarray:
        return np.asarray(self.anchors, dtype=float) / self.r

    @property
    def degree(self) -> int:
        """Degree of the polynomial factor: odd part, far-field factor, other-anchor zeros."""
        k0 = len(self.anchors)
        return (2 * self.S - 1) + 4 * self.S + 2 * self.S * (2 * k0 - 1)

    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def _fhat(self, z, j: int):
        zt = self.z_anchors
        zj = zt[j]
        others = np.concatenate([np.delete(zt, j), -zt])
        T2 = self.T * self.T
        S2 = 2 * self.S
        lin = (z * z - T2) * (1.0 / (zj * zj - T2))
        for zo in others:
            lin = lin * ((z - zo) * (1.0 / (zj - zo)))
        d = (z - zj) * (1.0 / self.sigma)
        w = (-(d * d)).exp() if isinstance(d, Jet) else np.exp(-d * d)
        return lin**S2 * w

    def _branch(self, z, j: int):
        x = z - self.z_anchors[j]
        a = self.coefficients[j]
        poly = 0.0 * x
        for k in range(self.S, 0, -1):
            poly = poly * (x * x) + a[k - 1] / math.factorial(2 * k - 1)
        return poly * x * self._fhat(z, j)

    def __call__(self, z):
        """``g(z)`` for a float array or a :class:`Jet` in ``z``."""
        if self.is_zero():
            return 0.0 * z
        out = 0.0 * z
        for j in range(len(self.anchors)):
            out = out + self._branch(z, j) + self._branch(-z, j)
        return out

    def to_dict(self) -> dict:
        return {
            "anchors": list(map(float, self.anchors)),
            "coefficients": np.asarray(self.coefficients).tolist(),
            "S": self.S,
            "r": self.r,
            "T": self.T,
            "sigma": self.sigma,
            "m": self.m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Corrector":
        return cls(
            anchors=tuple(d["anchors"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            S=int(d["S"]),
            r=float(d["r"]),
            T=float(d["T"]),
            sigma=float(d["sigma"]),
            m=int(d.get("m", 0)),
        )


def _envelope_width(z_anchors: np.ndarray) -> float:
    # a quarter of the nearest obstacle: another anchor, a mirrored anchor or the well edge
    pts = np.concatenate([z_anchors, -z_anchors])
    gaps = np.abs(pts[:, None] - pts[None, :])[~np.eye(pts.size, dtype=bool)]
    edge = 1.0 - np.max(np.abs(z_anchors))
    return float(min(0.4, 0.25 * gaps.min(), 0.25 * edge))


def build_corrector(spec: PotentialSpec, anchors, rhs=None) -> Corrector:
    """Hermite corrector annihilating odd derivatives of ``h_m`` at ``+-anchors``.

    ``rhs`` overrides the interpolation data ``c_{j,2n-1}`` (shape ``(k0, S)``);
    by default ``c_{j,2n-1} = -h_m^{(2n-1)}(z_j)``.
    """
    y = np.asarray(anchors, dtype=float)
    if y.ndim != 1 or y.size != spec.kappa0:
        raise DegenerateAnchorError(f"expected {spec.kappa0} anchors, got {y.size}")
    if np.any(y <= 0.0) or np.any(y >= spec.r):
        raise DegenerateAnchorError("anchors must lie strictly inside (0, r)")
    if y.size > 1 and np.min(np.diff(np.sort(y))) < 1e-10:
        raise DegenerateAnchorError("anchor collision")
    zt = y / spec.r
    S = spec.S
    N = 2 * S - 1
    if rhs is None:
        rhs = np.array([[-h_profile(zj, spec.m, N).derivatives()[2 * n - 1] for n in range(1, S + 1)] for zj in zt])
    rhs = np.asarray(rhs, dtype=float).reshape(spec.kappa0, S)
    shell = Corrector(tuple(y), np.zeros((spec.kappa0, S)), S, spec.r, spec.T, _envelope_width(zt), spec.m)
    coeffs = np.zeros((spec.kappa0, S))
    for j, zj in enumerate(zt):
        fh = shell._fhat(Jet.variable(zj, N), j).c  # normalized Taylor coefficients
        a = coeffs[j]
        for k in range(1, S + 1):
            s = rhs[j, k - 1]
            for n in range(1, k):
                # (d/dz)^(2k-1) of (z-z_j)^(2n-1)/(2n-1)! fhat at z_j
                s -= a[n - 1] * math.factorial(2 * k - 1) / math.factorial(2 * n - 1) * fh[2 * k - 2 * n]
            a[k - 1] = s / fh[0]
    return Corrector(tuple(y), coeffs, S, spec.r, spec.T, shell.sigma, spec.m, rhs)


class Potential:
    """``Q_m`` for a spec and corrector, with values and y-jets."""

    def __init__(self, spec: PotentialSpec, corrector: Corrector | None = None):
        self.spec = spec
        self.corrector = corrector

    @property
    def E(self) -> float:
        return self.spec.E

    def values(self, y) -> np.ndarray:
        s = self.spec
        z = np.asarray(y, dtype=float) / s.r
        g = self.corrector(z) if self.corrector is not None else 0.0
        return -s.E**2 * (_h_values(z, s.m) + g)

    def jet(self, y, order: int) -> Jet:
        """Taylor jet in ``y`` (normalized coefficients) at the points ``y``."""
        s = self.spec
        z = Jet.variable(y, order) * (1.0 / s.r)
        tot = h_profile(z, s.m)
        if self.corrector is not None and not self.corrector.is_zero():
            tot = tot + self.corrector(z)
        return tot * (-s.E**2)

    def derivative(self, y, n: int) -> np.ndarray:
        return self.jet(y, n).derivatives()[n]

    def __call__(self, y):
        return self.values(y)

    def to_json(self) -> str:
        s = self.spec
        d = {"E": s.E, "r": s.r, "m": s.m, "S": s.S, "kappa0": s.kappa0, "T": s.T, "gamma": s.gamma}
        c = self.corrector
        d["anchors"] = list(c.anchors) if c is not None else []
        d["coefficients"] = c.coefficients.tolist() if c is not None else []
        d["sigma"] = c.sigma if c is not None else None
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        d = json.loads(text)
        spec = PotentialSpec(E=d["E"], r=d["r"], m=d["m"], S=d["S"], kappa0=d["kappa0"], T=d["T"], gamma=d["gamma"])
        corr = None
        if d.get("anchors"):
            corr = Corrector(tuple(d["anchors"]), np.asarray(d["coefficients"], dtype=float), spec.S,
                             spec.r, spec.T, float(d["sigma"]), spec.m)
        return cls(spec, corr)


class ConstantPotential:
    """``Q = const``; a test stub with exact solutions."""

    def __init__(self, value: float, E: float | None = None):
        self.value = float(value)
        self.E = float(E if E is not None else math.sqrt(max(-value, 0.0)))

    def values(self, y):
        return np.full(np.shape(y), self.value)

    def jet(self, y, order: int) -> Jet:
        return Jet.constant(np.full(np.shape(y), self.value), order)

    def derivative(self, y, n):
        return np.full(np.shape(y), self.value if n == 0 else 0.0)

    __call__ = values


class StepPotential:
    """The singular limit ``Q_inf``: ``-E^2`` inside ``|y| < r``, 0 outside."""

    def __init__(self, E: float, r: float):
        self.E = float(E)
        self.r = float(r)

    def values(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(np.abs(y) < self.r, -self.E**2, 0.0)

    def jet(self, y, order):
        return Jet.constant(self.values(y), order)

    def derivative(self, y, n):
        return self.values(y) if n == 0 else np.zeros(np.shape(y))

    __call__ = values


def eval_Q(spec: PotentialSpec, corrector: Corrector | None, y, n: int = 0):
    """``d^n Q_m / dy^n`` at ``y``."""
    pot = Potential(spec, corrector)
    if n == 0:
        return pot.values(y)
    return pot.derivative(np.asarray(y, dtype=float), n)


def eval_Q_infty(spec: PotentialSpec, y):
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(np.abs(y) - spec.r) == 0.0):
        raise SingularPointError("Q_inf is undefined at |y| = r")
    out = np.where(np.abs(y) < spec.r, -spec.E**2, 0.0)
    return float(out) if out.ndim == 0 else out
