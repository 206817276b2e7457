"""Even Dirichlet spectrum of ``L = -d^2/dy^2 + Q`` on [-1, 1] and the secular
equation of the square-well limit."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .errors import (
    DomainError,
    FixedPointError,
    RootCountError,
    SingularOperatorError,
    SpectralCountError,
    StageError,
)
from .numerics import Grid1D, find_root
from .potential import Potential, PotentialSpec
from .shear import default_nodes, fixed_point_equilibrium

__all__ = [
    "Spectrum",
    "SecularRoots",
    "secular_eval",
    "alpha0",
    "alpha2",
    "beta",
    "secular_roots",
    "limit_negative_count",
    "fd_eigenvalues",
    "compute_spectrum",
    "sturm_count",
    "limit_eigenfunction",
    "apply_Lm_inverse",
    "frequency_vector",
    "frequency_curve",
    "find_m_threshold",
]


@dataclass
class Spectrum:
    """Eigenpairs on the half grid; ``phi[j]`` is normalized on the full interval."""

    grid: Grid1D
    eigenvalues: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    negative_count: int
    fd_eigenvalues: np.ndarray = field(default=None)
    kappa0: int | None = None

    @property
    def y(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def frequencies(self) -> np.ndarray:
        """``sqrt(-mu_j)`` over all negative eigenvalues."""
        return np.sqrt(-self.eigenvalues[: self.negative_count])

    @property
    def omega_vec(self) -> np.ndarray:
        return frequency_vector(self)

    def full(self, j: int):
        y = np.concatenate([-self.y[:0:-1], self.y])
        return y, np.concatenate([self.phi[j][:0:-1], self.phi[j]])

    def gram(self) -> np.ndarray:
        w = _weights(self.y)
        return 2.0 * (self.phi * w) @ self.phi.T

    def to_json(self) -> str:
        return json.dumps(
            {
                "eigenvalues": self.eigenvalues.tolist(),
                "frequencies": self.frequencies.tolist(),
                "negative_count": self.negative_count,
                "nodes": int(self.y.size),
            },
            indent=2,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y"] + [f"phi_{j + 1}" for j in range(self.phi.shape[0])])
            for i, yi in enumerate(self.y):
                w.writerow([yi] + list(self.phi[:, i]))


@dataclass(frozen=True)
class SecularRoots:
    """``lambdas[j-1]`` pairs with ``alpha0[j-1]``; roots beyond the first ``kappa0``
    (the square well under the width constraint has one more) sit in ``extra``."""

    E: float
    r: float
    kappa0: int
    lambdas: np.ndarray
    alpha0: np.ndarray
    alpha2: np.ndarray
    beta: np.ndarray
    extra: np.ndarray = field(default_factory=lambda: np.empty(0))


def _weights(y: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a uniform grid with an even number of cells,
    trapezoid otherwise."""
    n = y.size
    h = y[1] - y[0]
    if (n - 1) % 2 == 0 and np.allclose(np.diff(y), h):
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * h / 3.0
    w = np.zeros(n)
    d = np.diff(y)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


# --- secular equation of the square well ------------------------------------


def secular_eval(E: float, r: float, lam):
    """``lam cos(r s) coth((1-r) lam) - s sin(r s)`` with ``s = sqrt(E^2 - lam^2)``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0) or np.any(lam >= E):
        raise DomainError("lambda must lie in (0, E)")
    s = np.sqrt(E * E - lam * lam)
    return lam * np.cos(r * s) / np.tanh((1.0 - r) * lam) - s * np.sin(r * s)


def alpha0(kappa0: int, j: int) -> float:
    """Root in (0, 1/2) of ``a + (kappa0 + 1/4) sin(pi a) = j - 1/2``; exists for ``j <= kappa0 + 1``."""
    if not 1 <= j <= kappa0 + 1:
        raise ValueError("j must be in 1..kappa0+1")
    c = kappa0 + 0.25
    return find_root(lambda a: a + c * math.sin(math.pi * a) - (j - 0.5), (0.0, 0.5), tol=1e-15)


def alpha2(kappa0: int, j: int) -> float:
    a0 = alpha0(kappa0, j)
    c = kappa0 + 0.25
    lhs = (-1) ** (j - 1) * math.pi * (1.0 + c * math.pi * math.cos(math.pi * a0))
    return -2.0 * math.cos(math.pi * a0) * math.cos(c * math.pi * math.sin(math.pi * a0)) / lhs


def beta(kappa0: int, j: int, E: float) -> float:
    return math.exp(((kappa0 + 0.25) * math.pi - E) * math.cos(math.pi * alpha0(kappa0, j)))


def _all_secular_roots(E: float, r: float, panels: int) -> np.ndarray:
    grid = np.linspace(E * 1e-9, E * (1 - 1e-12), panels + 1)
    f = secular_eval(E, r, grid)
    idx = np.nonzero(np.sign(f[1:]) * np.sign(f[:-1]) < 0)[0]
    roots = [find_root(lambda l: float(secular_eval(E, r, l)), (grid[i], grid[i + 1]), tol=1e-15 * E) for i in idx]
    return np.array(sorted(roots, reverse=True))


def limit_negative_count(E: float, r: float, panels: int = 10_000) -> int:
    """Number of negative even eigenvalues of the square-well operator."""
    return int(_all_secular_roots(E, r, panels).size)


def secular_roots(E: float, r: float, kappa0: int, panels: int = 10_000) -> SecularRoots:
    """The ``kappa0`` largest roots of the secular function in (0, E), descending.

    ``lam_j ~ E cos(pi alpha0(j))`` with ``alpha0`` increasing in ``j``, so the
    ordering matches ``mu_1 < mu_2 < ...``.
    """
    if E <= 0 or not 0 < r < 1:
        raise DomainError("need E > 0 and 0 < r < 1")
    lam = _all_secular_roots(E, r, panels)
    if lam.size < kappa0:
        raise RootCountError(f"found {lam.size} secular roots in (0, E); expected at least {kappa0}")
    js = range(1, kappa0 + 1)
    a0 = np.array([alpha0(kappa0, j) for j in js])
    a2 = np.array([alpha2(kappa0, j) for j in js])
    b = np.array([beta(kappa0, j, E) for j in js])
    return SecularRoots(E, r, kappa0, lam[:kappa0], a0, a2, b, lam[kappa0:])


def limit_eigenfunction(E: float, r: float, lam: float, y, tol: float = 1e-8):
    """Square-well eigenfunction ``c1 cos(s y)`` inside, ``c2 sinh(lam (1-|y|))`` outside,
    normalized in ``L^2(-1, 1)`` with positive value at 0."""
    s = math.sqrt(E * E - lam * lam)
    a, b = math.cos(s * r), math.sinh(lam * (1 - r))
    da, db = -s * math.sin(s * r), -lam * math.cosh(lam * (1 - r))
    M = np.array([[a, -b], [da, -db]])
    det = np.linalg.det(M)
    if abs(det) > tol * np.abs(M).max() ** 2:
        raise DomainError(f"lambda={lam} is not a secular root (matching determinant {det:.3e})")
    c1 = 1.0
    c2 = a / b
    # closed-form L^2 norm on [-1, 1]
    inner = r + math.sin(2 * s * r) / (2 * s)
    L = 1 - r
    outer = (math.sinh(2 * lam * L) / (2 * lam) - L) / 2
    norm = math.sqrt(c1 * c1 * inner + 2 * c2 * c2 * outer)
    ay = np.abs(np.asarray(y, dtype=float))
    val = np.where(ay <= r, c1 * np.cos(s * ay), c2 * np.sinh(lam * (1 - ay)))
    return val / norm


# --- discrete operator ---------------------------------------------------------


def _tridiagonal(q: np.ndarray, h: float):
    """Symmetrized FD operator on nodes 0..n-2 (Neumann ghost at 0, Dirichlet at 1).

    Row 0 is ``(2 u0 - 2 u1)/h^2 + q0 u0``; scaling it by 1/2 with the
    similarity ``diag(1/sqrt2, 1, ...)`` gives a symmetric tridiagonal matrix.
    """
    n = q.size - 1
    d = 2.0 / h**2 + q[:n]
    e = np.full(n - 1, -1.0 / h**2)
    e[0] *= math.sqrt(2.0)
    return d, e


def fd_eigenvalues(potential, k: int, n_nodes: int) -> np.ndarray:
    """The ``k`` smallest even Dirichlet eigenvalues of the second-order FD operator."""
    grid = Grid1D.uniform(0.0, 1.0, n_nodes)
    q = potential.values(grid.nodes)
    d, e = _tridiagonal(q, grid.spacing)
    return linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, k - 1))


def _shoot(q, qm, h, mu):
    u, v, bad = kernels.rk4_linear2(q, qm, h, 1.0, 0.0, mu)
    if bad >= 0:
        raise StageError(f"shooting overflow at node {bad} for mu={mu}")
    return u, v


def _shoot_back(q, qm, h, mu):
    """Solution with ``u(1) = 0, u'(1) = -1`` integrated from the wall inwards."""
    w, ws, bad = kernels.rk4_linear2(q[::-1].copy(), qm[::-1].copy(), h, 0.0, 1.0, mu)
    if bad >= 0:
        raise StageError(f"shooting overflow at node {q.size - 1 - bad} for mu={mu}")
    return w[::-1], -ws[::-1]


def _two_sided(q, qm, h, mu, k):
    """Left and right solutions glued at node ``k``; returns ``(wronskian, u, v)``.

    Shooting from both ends keeps each half in its stable direction: the
    eigenfunction decays like ``exp(-lam (1 - |y|))`` outside the well, which a
    single forward shot cannot resolve once ``lam (1 - r)`` is large.
    """
    uL, vL = _shoot(q[: k + 1], qm[:k], h, mu)
    uR, vR = _shoot_back(q[k:], qm[k:], h, mu)
    nl = math.hypot(uL[-1], vL[-1])
    nr = math.hypot(uR[0], vR[0])
    wr = (uL[-1] * vR[0] - uR[0] * vL[-1]) / (nl * nr)
    c = (uL[-1] * uR[0] + vL[-1] * vR[0]) / (nr * nr)
    u = np.concatenate([uL, c * uR[1:]])
    v = np.concatenate([vL, c * vR[1:]])
    return wr, u, v


def sturm_count(potential_or_q, n_nodes: int | None = None, mu: float = 0.0) -> int:
    """Number of even Dirichlet eigenvalues below ``mu`` from zeros of the even solution."""
    if isinstance(potential_or_q, tuple):
        q, qm, h = potential_or_q
    else:
        g = Grid1D.uniform(0.0, 1.0, n_nodes)
        q, qm, h = potential_or_q.values(g.nodes), potential_or_q.values(g.midpoints()), g.spacing
    u, _ = _shoot(q, qm, h, mu)
    s = np.sign(u)
    nz = int(np.count_nonzero(s[1:-1] * s[:-2] < 0))
    return nz + int(s[-1] * s[-2] < 0 or s[-1] == 0)


def compute_spectrum(potential, k_max: int, n_nodes: int | None = None, kappa0: int | None = None,
                     refine: bool = True) -> Spectrum:
    """Even Dirichlet eigenpairs of ``-u'' + Q u``.

    FD eigenvalues seed a secant iteration on the shooting miss ``u(1; mu)``
    with the RK4 kernel, so eigenvalues and eigenfunctions share the fourth-order
    accuracy of the shear profile on the same grid.
    """
    spec = getattr(potential, "spec", None)
    if kappa0 is None:
        kappa0 = spec.kappa0 if spec is not None else None
    if kappa0 is not None and k_max < kappa0 + 3:
        raise ValueError("k_max must be at least kappa0 + 3")
    if n_nodes is None:
        n_nodes = default_nodes(potential.E, spec.m if spec else 0, spec.r if spec else 1.0) + 1
    grid = Grid1D.uniform(0.0, 1.0, n_nodes)
    y, h = grid.nodes, grid.spacing
    q, qm = potential.values(y), potential.values(grid.midpoints())
    d, e = _tridiagonal(q, h)
    mu_fd = linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, k_max - 1))
    # glue at the well edge, or mid-channel for potentials without one
    edge = getattr(spec, "r", None) or getattr(potential, "r", None) or 0.5
    k = int(np.clip(round(edge / h), 2, y.size - 3))
    mus = mu_fd.copy()
    if refine:
        for j, m0 in enumerate(mu_fd):
            miss = lambda mu: _two_sided(q, qm, h, mu, k)[0]
            step = 1e-6 * max(1.0, abs(m0))
            try:
                mus[j] = optimize.newton(miss, m0, x1=m0 + step, tol=1e-14 * max(1.0, abs(m0)), maxiter=50)
            except RuntimeError as exc:
                raise StageError(f"shooting refinement failed for eigenvalue {j}") from exc
    phi = np.empty((k_max, y.size))
    dphi = np.empty_like(phi)
    w = _weights(y)
    for j, mu in enumerate(mus):
        _, u, v = _two_sided(q, qm, h, mu, k)
        u[-1] = 0.0
        nrm = math.sqrt(2.0 * np.dot(w, u * u))
        phi[j], dphi[j] = u / nrm, v / nrm
    neg = int(np.count_nonzero(mus < 0))
    if refine and sturm_count((q, qm, h)) != neg:
        raise SpectralCountError("Sturm oscillation count disagrees with the eigenvalue count")
    if neg >= k_max:
        raise SpectralCountError(f"all {k_max} computed eigenvalues are negative; raise k_max")
    if kappa0 is not None:
        # the limit operator fixes the count; falling short of it means m is below threshold
        src = spec if spec is not None else potential
        expected = limit_negative_count(src.E, src.r) if hasattr(src, "r") else kappa0
        if neg < kappa0 or neg != expected:
            raise SpectralCountError(f"{neg} negative eigenvalues; the square-well limit has {expected}")
    if np.any(np.diff(mus) <= 0):
        raise SpectralCountError("refined eigenvalues are not strictly increasing")
    return Spectrum(grid, mus, phi, dphi, neg, mu_fd, kappa0)


def apply_Lm_inverse(potential, f, n_nodes: int | None = None, grid: Grid1D | None = None,
                     check: bool = True) -> np.ndarray:
    """Solve ``-u'' + Q u = f`` for even ``u`` with ``u(+-1) = 0`` on the half grid."""
    f = np.asarray(f, dtype=float)
    if grid is None:
        grid = Grid1D.uniform(0.0, 1.0, n_nodes or f.size)
    if f.size != grid.n:
        raise ValueError("f must be sampled on the half grid [0, 1]")
    h = grid.spacing
    q = potential.values(grid.nodes)
    n = grid.n - 1
    d = 2.0 / h**2 + q[:n]
    ab = np.zeros((3, n))
    ab[1] = d
    ab[0, 1:] = -1.0 / h**2
    ab[2, :-1] = -1.0 / h**2
    ab[0, 1] = -2.0 / h**2  # ghost node u_{-1} = u_1
    if check:
        ds, es = _tridiagonal(q, h)
        near = linalg.eigh_tridiagonal(ds, es, eigvals_only=True, select="i", select_range=(0, 0))
        lo = linalg.eigvalsh_tridiagonal(ds, es, select="v", select_range=(-abs(near[0]) - 1.0, abs(near[0]) + 1.0))
        small = np.min(np.abs(lo)) if lo.size else 1.0
        cond = (4.0 / h**2 + np.abs(q).max()) / max(small, 1e-300)
        if cond > 1e12:
            raise SingularOperatorError(f"operator condition estimate {cond:.2e}")
    u = np.zeros(grid.n)
    u[:n] = linalg.solve_banded((1, 1), ab, f[:n])
    # one round of iterative refinement removes the pivoting error near the ghost row
    r = f[:n] - _banded_apply(ab, u[:n])
    u[:n] += linalg.solve_banded((1, 1), ab, r)
    return u


def _banded_apply(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def frequency_vector(spectrum: Spectrum) -> np.ndarray:
    """``(lam_1, ..., lam_k0)`` in eigenvalue order, hence strictly decreasing."""
    k = spectrum.kappa0 if spectrum.kappa0 is not None else spectrum.negative_count
    lam = spectrum.frequencies[:k]
    if np.any(np.diff(lam) >= 0):
        raise SpectralCountError("frequencies are not strictly ordered")
    return lam


def frequency_curve(spec: PotentialSpec, depths, k_max: int | None = None, n_nodes: int | None = None):
    """``omega_m(A)`` for depths ``A`` at fixed width; each depth gets its own anchor fixed point."""
    out = []
    k_max = k_max or spec.kappa0 + 3
    for A in np.atleast_1d(depths):
        s = spec.with_depth(float(A))
        corr, eq, _ = fixed_point_equilibrium(s, n_nodes)
        sp = compute_spectrum(Potential(s, corr), k_max, n_nodes=eq.y.size, kappa0=s.kappa0)
        out.append(frequency_vector(sp))
    return np.array(out)


def find_m_threshold(kappa0: int, r: float, m_start: int = 20, m_max: int = 2560, S: int = 3):
    """Smallest ``m`` on the doubling ladder from which the fixed point closes and
    the negative count equals ``kappa0`` for two consecutive rungs."""
    m = m_start
    ok_prev = None
    while m <= m_max:
        spec = PotentialSpec.from_width(kappa0, r, m, S)
        try:
            corr, eq, _ = fixed_point_equilibrium(spec)
            compute_spectrum(Potential(spec, corr), kappa0 + 3, n_nodes=eq.y.size, kappa0=kappa0)
            ok = True
        except (SpectralCountError, FixedPointError, StageError):
            ok = False
        if ok and ok_prev is not None:
            return ok_prev
        ok_prev = m if ok else None
        m *= 2
    if ok_prev is not None:
        return ok_prev
    raise SpectralCountError(f"no admissible m up to {m_max} for kappa0={kappa0}, r={r}")
