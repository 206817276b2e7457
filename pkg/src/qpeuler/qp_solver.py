"""Space quasi-periodic solutions near the shear equilibrium.

The perturbation is written ``phi = eps * zeta`` with

    zeta(x, y) = sum_{l, j} zeta_{l,j} cos(l . omega x) phi_j(y),

so that ``(omega . d_theta)^2 zeta - L zeta - g(h + eps zeta) / eps = 0``.  The
``kappa0`` tangential amplitudes ``zeta_{e_k,k} = sqrt(xi_k)`` are pinned and the
frequency vector (or, in counterterm mode, the tangential eigenvalue moduli) is
solved for instead.  Everything is Galerkin in ``j`` and pseudo-spectral in the
angles; the Jacobian is dense and factored directly.

Coefficients are stored rescaled (``zeta``); ``CoefficientState.u`` gives the
physical values ``eps * zeta``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import (AliasWarning, ChartError, ConfigError, SmallDivisorError, StagnationError,
                     TruncationWarning)
from .frequencies import DiophantineSpec, is_diophantine, lattice
from .nonlinearity import Nonlinearity, RegularizedFamily, default_eta, solve_shift
from .potential import Potential, PotentialSpec
from .shear import ShearEquilibrium, fixed_point_equilibrium
from .spectrum import Spectrum, _weights, compute_spectrum, frequency_vector

__all__ = [
    "CoefficientState",
    "SolveResult",
    "SolverConfig",
    "SolverProblem",
    "Galerkin",
    "ActionAngle",
    "mode_set",
    "linear_solution",
    "residual",
    "diag_inverse",
    "newton_solve",
    "solve_with_counterterm",
    "invert_counterterm",
    "action_angle_pack",
    "action_angle_unpack",
    "tail_correction",
    "verify_euler",
]


def mode_set(kappa0: int, K: int) -> np.ndarray:
    """``l = 0`` followed by the half lattice ``0 < |l|_inf <= K``."""
    return np.concatenate([np.zeros((1, kappa0), dtype=int), lattice(kappa0, K)])


def _unit_rows(modes: np.ndarray) -> list[int]:
    k0 = modes.shape[1]
    eye = np.eye(k0, dtype=int)
    return [int(np.nonzero((modes == eye[k]).all(axis=1))[0][0]) for k in range(k0)]


@dataclass
class CoefficientState:
    kappa0: int
    K: int
    J: int
    zeta: np.ndarray
    omega: np.ndarray
    eps: float
    xi: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        self.modes = mode_set(self.kappa0, self.K)
        if self.zeta.shape != (self.modes.shape[0], self.J):
            raise ValueError(f"zeta has shape {self.zeta.shape}, expected {(self.modes.shape[0], self.J)}")

    @property
    def u(self) -> np.ndarray:
        return self.eps * self.zeta

    def copy(self) -> "CoefficientState":
        a = None if self.alpha is None else self.alpha.copy()
        return CoefficientState(self.kappa0, self.K, self.J, self.zeta.copy(), self.omega.copy(),
                                self.eps, self.xi.copy(), a)

    def row(self, ell) -> int:
        ell = np.asarray(ell, dtype=int)
        for s in (ell, -ell):
            hit = np.nonzero((self.modes == s).all(axis=1))[0]
            if hit.size:
                return int(hit[0])
        raise KeyError(tuple(ell))

    def embed(self, K: int, J: int | None = None) -> "CoefficientState":
        """Same coefficients on another truncation (dropping or zero-padding)."""
        J = J or self.J
        out = CoefficientState(self.kappa0, K, J, np.zeros((mode_set(self.kappa0, K).shape[0], J)),
                               self.omega.copy(), self.eps, self.xi.copy(),
                               None if self.alpha is None else self.alpha.copy())
        jj = min(J, self.J)
        for i, ell in enumerate(self.modes):
            if np.abs(ell).max(initial=0) <= K:
                out.zeta[out.row(ell), :jj] = self.zeta[i, :jj]
        return out

    def write_csv(self, path, physical: bool = True) -> None:
        vals = self.u if physical else self.zeta
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ell", "j", "value"])
            for i, ell in enumerate(self.modes):
                for j in range(self.J):
                    if vals[i, j] != 0.0:
                        w.writerow([" ".join(map(str, ell)), j + 1, repr(float(vals[i, j]))])


def linear_solution(spectrum: Spectrum, xi, eps: float, K: int, J: int) -> CoefficientState:
    """Unperturbed torus: ``zeta_{e_k,k} = sqrt(xi_k)`` and ``omega = omega_m``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    omega = frequency_vector(spectrum)
    k0 = omega.size
    if xi.size != k0:
        raise ConfigError(f"need {k0} amplitudes xi, got {xi.size}")
    if np.any(xi <= 0):
        raise ConfigError("amplitudes xi must be positive")
    if J < k0 + 1 or J > spectrum.phi.shape[0]:
        raise ConfigError(f"J must lie in [{k0 + 1}, {spectrum.phi.shape[0]}]")
    zeta = np.zeros((mode_set(k0, K).shape[0], J))
    st = CoefficientState(k0, K, J, zeta, omega.copy(), float(eps), xi)
    for k, i in enumerate(_unit_rows(st.modes)):
        zeta[i, k] = math.sqrt(xi[k])
    return st


# --- discretization ---------------------------------------------------------------


class Galerkin:
    """Angle grid, y quadrature and the projections for one truncation ``(K, J)``."""

    def __init__(self, spectrum: Spectrum, kappa0: int, K: int, J: int, y_stride: int = 2,
                 n_theta: int | None = None):
        self.kappa0, self.K, self.J = kappa0, K, J
        self.modes = mode_set(kappa0, K)
        self.nm = self.modes.shape[0]
        # 3/2 rule on 2K+1 points per angle
        n = n_theta or math.ceil(1.5 * (2 * K + 1))
        self.n = n
        t = 2.0 * np.pi * np.arange(n) / n
        self.theta = np.stack(np.meshgrid(*([t] * kappa0), indexing="ij"), axis=-1).reshape(-1, kappa0)
        arg = self.theta @ self.modes.T
        self.C = np.cos(arg)
        self.S = np.sin(arg)
        self.cnorm = np.where((self.modes == 0).all(axis=1), 1.0, 0.5)
        y = spectrum.y
        if (y.size - 1) % (2 * y_stride):
            y_stride = 1
        self.idx = np.arange(0, y.size, y_stride)
        w = 2.0 * _weights(y[self.idx])
        self.Phi = spectrum.phi[:J, self.idx]
        self.PW = self.Phi * w
        self.mu = spectrum.eigenvalues[:J].copy()
        self.lam = np.sqrt(-spectrum.eigenvalues[:kappa0])
        self.pinned = _unit_rows(self.modes)

    @property
    def npts(self) -> int:
        return self.theta.shape[0]

    def synth(self, zeta: np.ndarray) -> np.ndarray:
        return self.C @ zeta @ self.Phi

    def project(self, F: np.ndarray) -> np.ndarray:
        return (self.C.T @ F / self.npts / self.cnorm[:, None]) @ self.PW.T

    def project_sine(self, F: np.ndarray) -> np.ndarray:
        return (self.S.T @ F / self.npts * 2.0) @ self.PW.T

    def divisors(self, omega, alpha=None) -> np.ndarray:
        """``(omega . l)^2 + mu_j``; in counterterm mode ``mu_j = -alpha_j^2`` for ``j <= kappa0``."""
        wl = self.modes @ np.asarray(omega, dtype=float)
        mu = self.mu.copy()
        if alpha is not None:
            mu[: self.kappa0] = -np.asarray(alpha, dtype=float) ** 2
        return wl[:, None] ** 2 + mu[None, :]

    def free_mask(self) -> np.ndarray:
        m = np.ones((self.nm, self.J), dtype=bool)
        for k, i in enumerate(self.pinned):
            m[i, k] = False
        return m

    def tail_ratio(self, F: np.ndarray) -> float:
        """Largest angular Fourier coefficient beyond ``3K/2`` relative to the largest overall."""
        k0, n = self.kappa0, self.n
        G = np.fft.fftn(F.reshape((n,) * k0 + (-1,)), axes=tuple(range(k0)))
        amp = np.abs(G).max(axis=-1)
        f = np.abs(np.fft.fftfreq(n, 1.0 / n)).astype(int)
        grid = np.stack(np.meshgrid(*([f] * k0), indexing="ij"), axis=-1).max(axis=-1)
        top = amp.max()
        if top == 0.0:
            return 0.0
        out = amp[grid >= math.ceil(1.5 * self.K)]
        return float(out.max() / top) if out.size else 0.0


@dataclass
class SolverProblem:
    """Equilibrium, spectrum and nonlinearity shared by all solves at one depth."""

    eq: ShearEquilibrium
    spectrum: Spectrum
    nl: Nonlinearity
    S: int = 3
    _families: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, spec: PotentialSpec, J: int, n_nodes: int | None = None) -> "SolverProblem":
        corr, eq, _ = fixed_point_equilibrium(spec, n_nodes)
        sp = compute_spectrum(Potential(spec, corr), max(J, spec.kappa0 + 3), n_nodes=eq.y.size,
                              kappa0=spec.kappa0)
        return cls(eq, sp, Nonlinearity(eq), spec.S)

    @property
    def kappa0(self) -> int:
        return self.eq.kappa0

    def family(self, eps: float, eta: float | None = None) -> RegularizedFamily:
        eta = eta if eta is not None else default_eta(self.nl, max(eps, 1e-300), self.S)
        if eta not in self._families:
            fam = RegularizedFamily(self.nl, eta, self.S)
            solve_shift(fam)
            self._families[eta] = fam
        return self._families[eta]


def _nonlinear(gal: Galerkin, fam: RegularizedFamily, zeta: np.ndarray, eps: float):
    base = fam.shift[gal.idx][None, :]
    phi = eps * gal.synth(zeta)
    return fam.g(gal.idx[None, :], base, phi), phi


def residual(state: CoefficientState, fam: RegularizedFamily, gal: Galerkin, counterterm: bool = False,
             diagnostics: dict | None = None) -> np.ndarray:
    """``-((omega . l)^2 + mu_j) zeta_{l,j} - [g(h + eps zeta)]_{l,j} / eps``."""
    D = gal.divisors(state.omega, state.alpha if counterterm else None)
    R = -D * state.zeta
    if state.eps == 0.0:
        return R
    N, _ = _nonlinear(gal, fam, state.zeta, state.eps)
    R -= gal.project(N) / state.eps
    if diagnostics is not None:
        scale = max(1.0, np.abs(R).max())
        diagnostics["leakage"] = float(np.abs(gal.project_sine(N)[1:]).max() / state.eps) / scale
        diagnostics["alias"] = gal.tail_ratio(N)
    return R


def _jacobian_zeta(state: CoefficientState, fam: RegularizedFamily, gal: Galerkin, D: np.ndarray) -> np.ndarray:
    nm, J = gal.nm, gal.J
    base = fam.shift[gal.idx][None, :]
    W = fam.dg(gal.idx[None, :], base, state.eps * gal.synth(state.zeta))
    # U[p] = sum_y W(p, y) phi_j(y) phi_k(y) w(y)
    U = np.einsum("py,jy,ky->pjk", W, gal.PW, gal.Phi, optimize=True)
    G = np.einsum("pa,pb,pjk->ajbk", gal.C / gal.cnorm, gal.C, U, optimize=True) / gal.npts
    Jz = -G.reshape(nm * J, nm * J)
    Jz[np.diag_indices_from(Jz)] -= D.ravel()
    return Jz


def diag_inverse(gal: Galerkin, omega, rhs: np.ndarray, divisor_floor: float, alpha=None):
    """Divide mode ``(l, j)`` by ``-((omega . l)^2 + mu_j)``.

    Tangential rows with a divisor below the floor are zeroed; returns the result
    and the list of zeroed ``(l, j)`` pairs (``j`` one-based).
    """
    D = gal.divisors(omega, alpha)
    out = np.zeros_like(rhs)
    bad = np.zeros(D.shape, dtype=bool)
    bad[:, : gal.kappa0] = np.abs(D[:, : gal.kappa0]) < divisor_floor
    ok = ~bad & (D != 0)
    out[ok] = -rhs[ok] / D[ok]
    zeroed = [(tuple(int(v) for v in gal.modes[i]), int(j) + 1) for i, j in zip(*np.nonzero(bad))]
    return out, zeroed


# --- Newton ---------------------------------------------------------------------------


@dataclass
class SolverConfig:
    eps: float
    xi: tuple
    K: int = 12
    J: int = 24
    tol: float = 1e-11
    steps: int = 4
    schedule: bool = False
    K0: int = 2
    upsilon: float = 1e-3
    tau: float = 2.0
    L_max: int = 100
    divisor_floor: float | None = None
    eta: float | None = None
    y_stride: int = 2
    max_iter: int = 40

    def __post_init__(self):
        self.xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        if self.eps < 0:
            raise ConfigError("eps must be non-negative")
        if self.K < 1 or self.J < 2 or self.steps < 1:
            raise ConfigError("K >= 1, J >= 2 and steps >= 1 are required")

    @property
    def floor(self) -> float:
        return self.divisor_floor if self.divisor_floor is not None else 0.25 * self.upsilon**2


@dataclass
class SolveResult:
    state: CoefficientState
    omega_tilde: np.ndarray
    alpha: np.ndarray | None
    residual_history: list
    min_divisor: float
    euler_residual: float | None = None
    iterations: int = 0
    leakage: float = 0.0
    alias: float = 0.0
    warnings: list = field(default_factory=list)
    quadratic_constant: float | None = None
    eta: float | None = None
    family: RegularizedFamily | None = field(default=None, repr=False)
    galerkin: Galerkin | None = field(default=None, repr=False)
    spectrum: Spectrum | None = field(default=None, repr=False)
    tail: np.ndarray | None = field(default=None, repr=False)

    def manifest(self) -> dict:
        return {
            "kappa0": self.state.kappa0,
            "K": self.state.K,
            "J": self.state.J,
            "eps": self.state.eps,
            "xi": self.state.xi.tolist(),
            "eta": self.eta,
            "omega_tilde": self.omega_tilde.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "residual_history": [float(r) for r in self.residual_history],
            "iterations": self.iterations,
            "quadratic_constant": self.quadratic_constant,
            "min_divisor": self.min_divisor,
            "sine_leakage": self.leakage,
            "alias_ratio": self.alias,
            "euler_residual": self.euler_residual,
            "warnings": list(self.warnings),
        }

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)


def _prescan(gal: Galerkin, omega, floor: float, alpha=None) -> float:
    """Smallest divisor over non-pinned rows; raises on rows with ``mu_j < 0`` below the floor."""
    D = np.abs(gal.divisors(omega, alpha))
    free = gal.free_mask()
    neg = free & (gal.mu < 0)[None, :]
    if np.any(D[neg] < floor):
        i, j = min(zip(*np.nonzero(neg & (D < floor))), key=lambda ij: D[ij])
        raise SmallDivisorError((tuple(int(v) for v in gal.modes[i]), int(j) + 1), float(D[i, j]))
    return float(D[free].min())


def _newton(state: CoefficientState, fam: RegularizedFamily, gal: Galerkin, tol: float, max_iter: int,
            counterterm: bool) -> tuple[CoefficientState, list]:
    free = gal.free_mask()
    k0 = gal.kappa0
    hist = []
    st = state.copy()
    for it in range(max_iter + 1):
        R = residual(st, fam, gal, counterterm)
        r = float(np.abs(R).max())
        hist.append(r)
        if r < tol:
            return st, hist
        if len(hist) >= 4 and hist[-1] > 0.1 * hist[-4]:
            raise StagnationError(f"residual {hist[-1]:.3e} after {len(hist) - 1} Newton steps, "
                                  f"no tenfold drop in three steps")
        if it == max_iter:
            break
        D = gal.divisors(st.omega, st.alpha if counterterm else None)
        Jz = _jacobian_zeta(st, fam, gal, D)[:, free.ravel()]
        Jw = np.zeros((gal.nm * gal.J, k0))
        if counterterm:
            for k in range(k0):
                col = np.zeros((gal.nm, gal.J))
                col[:, k] = 2.0 * st.alpha[k] * st.zeta[:, k]
                Jw[:, k] = col.ravel()
        else:
            wl = gal.modes @ st.omega
            for k in range(k0):
                Jw[:, k] = (-2.0 * wl[:, None] * gal.modes[:, k, None] * st.zeta).ravel()
        dx = linalg.solve(np.hstack([Jz, Jw]), -R.ravel())
        st.zeta[free] += dx[:-k0]
        if counterterm:
            st.alpha = st.alpha + dx[-k0:]
        else:
            st.omega = st.omega + dx[-k0:]
    raise StagnationError(f"no convergence in {max_iter} Newton steps (residual {hist[-1]:.3e})")


def _initial_guess(state: CoefficientState, fam: RegularizedFamily, gal: Galerkin, floor: float,
                   counterterm: bool) -> CoefficientState:
    """One diagonal sweep: corrections to the non-pinned modes from the nonlinear image."""
    st = state.copy()
    if st.eps == 0.0:
        return st
    N, _ = _nonlinear(gal, fam, st.zeta, st.eps)
    corr, _ = diag_inverse(gal, st.omega, gal.project(N) / st.eps, floor, st.alpha if counterterm else None)
    free = gal.free_mask()
    corr[~free] = 0.0
    # rhs enters with a minus sign: -D z = P[N]/eps
    st.zeta = st.zeta + corr
    return st


def _ladder(cfg: SolverConfig) -> list[int]:
    if not cfg.schedule:
        return [cfg.K]
    out, n = [], 0
    while True:
        k = min(cfg.K, math.ceil(cfg.K0 ** (1.5**n)))
        if not out or k > out[-1]:
            out.append(k)
        if k >= cfg.K:
            return out
        n += 1


def _quadratic_constant(hist: list, floor: float = 1e-13) -> float | None:
    """``max r_{n+1} / r_n^2`` over the last three iterates, skipping steps that land
    on the roundoff floor of the residual."""
    tail = hist[-3:]
    pairs = [(a, b) for a, b in zip(tail[:-1], tail[1:]) if b > floor]
    if not pairs:
        return None
    return max(b / a**2 for a, b in pairs)


def _finish(st: CoefficientState, hist: list, fam: RegularizedFamily, gal: Galerkin, cfg: SolverConfig,
            counterterm: bool, iterations: int, gal_spectrum: Spectrum) -> SolveResult:
    diag: dict = {}
    residual(st, fam, gal, counterterm, diag)
    notes = []
    mind = _prescan(gal, st.omega, cfg.floor, st.alpha if counterterm else None)
    if diag.get("alias", 0.0) > 1e-10:
        notes.append(f"alias: angular tail ratio {diag['alias']:.2e}")
        warnings.warn(notes[-1], AliasWarning, stacklevel=3)
    top = np.abs(st.zeta).max()
    edge = np.abs(gal.modes).max(axis=1) == gal.K
    tail = max(np.abs(st.zeta[edge]).max(), np.abs(st.zeta[:, -1]).max()) / top if top else 0.0
    if tail > 1e-10:
        notes.append(f"truncation: boundary coefficients reach {tail:.2e} of the largest")
        warnings.warn(notes[-1], TruncationWarning, stacklevel=3)
    return SolveResult(st, st.omega.copy(), None if st.alpha is None else st.alpha.copy(), hist, mind,
                       iterations=iterations, leakage=diag.get("leakage", 0.0), alias=diag.get("alias", 0.0),
                       warnings=notes, quadratic_constant=_quadratic_constant(hist), eta=fam.eta,
                       family=fam, galerkin=gal, spectrum=gal_spectrum)


def _run(problem: SolverProblem, cfg: SolverConfig, omega_fixed=None) -> SolveResult:
    sp = problem.spectrum
    counterterm = omega_fixed is not None
    omega0 = frequency_vector(sp) if not counterterm else np.atleast_1d(np.asarray(omega_fixed, dtype=float))
    dres = is_diophantine(omega0, DiophantineSpec(cfg.upsilon, cfg.tau, cfg.L_max))
    if not dres.passed:
        raise SmallDivisorError((dres.ell, None), dres.value)
    Ks = _ladder(cfg)
    st = linear_solution(sp, cfg.xi, cfg.eps, Ks[0], cfg.J)
    if counterterm:
        st.omega = omega0.copy()
        st.alpha = frequency_vector(sp).copy()
    gal = Galerkin(sp, problem.kappa0, Ks[0], cfg.J, cfg.y_stride)
    fam = problem.family(cfg.eps, cfg.eta)
    if cfg.eps == 0.0:
        _prescan(gal, st.omega, cfg.floor, st.alpha)
        hist = [float(np.abs(residual(st, fam, gal, counterterm)).max())]
        return _finish(st, hist, fam, gal, cfg, counterterm, 0, sp)
    _prescan(gal, st.omega, cfg.floor, st.alpha)
    ladder = np.geomspace(cfg.eps / 8.0, cfg.eps, cfg.steps) if cfg.steps > 1 else [cfg.eps]
    hist: list = []
    iters = 0
    for e in ladder:
        st.eps = float(e)
        f = problem.family(e, cfg.eta)
        st = _initial_guess(st, f, gal, cfg.floor, counterterm) if e == ladder[0] else st
        st, h = _newton(st, f, gal, cfg.tol, cfg.max_iter, counterterm)
        iters += len(h) - 1
        hist = h
    for K in Ks[1:]:
        st = st.embed(K)
        gal = Galerkin(sp, problem.kappa0, K, cfg.J, cfg.y_stride)
        st, hist = _newton(st, fam, gal, cfg.tol, cfg.max_iter, counterterm)
        iters += len(hist) - 1
    st.eps = cfg.eps
    return _finish(st, hist, fam, gal, cfg, counterterm, iters, sp)


def newton_solve(problem: SolverProblem, cfg: SolverConfig) -> SolveResult:
    """Pinned tangential amplitudes, unknown frequency vector."""
    return _run(problem, cfg)


def solve_with_counterterm(problem: SolverProblem, cfg: SolverConfig, omega) -> SolveResult:
    """Fixed frequency vector ``omega``; the tangential eigenvalue moduli ``alpha`` are unknown.

    ``alpha`` is the counterterm map evaluated at ``omega``.
    """
    return _run(problem, cfg, omega_fixed=omega)


def invert_counterterm(problem: SolverProblem, cfg: SolverConfig, target=None, omega0=None,
                       tol: float = 1e-12) -> tuple[np.ndarray, SolveResult]:
    """Find ``omega`` with ``alpha(omega) = target`` (default: the linear frequency vector).

    Secant iteration for one frequency, ``scipy.optimize.root`` otherwise.
    """
    target = frequency_vector(problem.spectrum) if target is None else np.atleast_1d(target)
    omega0 = target.copy() if omega0 is None else np.atleast_1d(np.asarray(omega0, dtype=float))
    last: dict = {}

    def miss(w):
        res = solve_with_counterterm(problem, cfg, np.atleast_1d(w))
        last["res"] = res
        return res.alpha - target

    if omega0.size == 1:
        # alpha(omega) - omega is O(eps); start the secant from two nearby points
        w0 = float(omega0[0])
        w1 = w0 - float(miss([w0])[0])
        w = optimize.newton(lambda x: float(miss([x])[0]), w0, x1=w1, tol=tol * max(1.0, abs(w0)), maxiter=30)
        sol = np.array([w])
        miss(sol)
    else:
        out = optimize.root(miss, omega0, method="hybr", tol=tol)
        if not out.success:
            raise StagnationError(f"counterterm inversion failed: {out.message}")
        sol = out.x
        miss(sol)
    return sol, last["res"]


# --- action-angle chart -------------------------------------------------------------


@dataclass
class ActionAngle:
    theta: np.ndarray
    Theta: np.ndarray
    I: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    K: int


def action_angle_pack(state: CoefficientState, spectrum: Spectrum) -> ActionAngle:
    """``a_j + i b_j = sqrt(I_j + xi_j) exp(-i Theta_j)`` sampled on the angle grid (``Z = 1``).

    ``a_j`` is the ``phi_j`` component of ``zeta``, ``b_j = (omega . d_theta a_j) / lam_j``.
    """
    k0 = state.kappa0
    gal = Galerkin(spectrum, k0, state.K, k0, n_theta=2 * state.K + 1)
    lam = gal.lam
    a = gal.C @ state.zeta[:, :k0]
    wl = state.modes @ state.omega
    b = -(gal.S * wl) @ state.zeta[:, :k0] / lam
    I = a * a + b * b - state.xi
    Theta = np.arctan2(-b, a)
    return ActionAngle(gal.theta, Theta, I, state.zeta[:, k0:].copy(), state.xi.copy(), state.omega.copy(),
                       lam, state.K)


def action_angle_unpack(pack: ActionAngle, eps: float = 0.0) -> CoefficientState:
    k0 = pack.xi.size
    amp = pack.I + pack.xi
    if np.any(amp <= 0):
        raise ChartError(f"I + xi reaches {amp.min():.3e}; the action-angle chart collapses")
    a = np.sqrt(amp) * np.cos(pack.Theta)
    modes = mode_set(k0, pack.K)
    C = np.cos(pack.theta @ modes.T)
    cnorm = np.where((modes == 0).all(axis=1), 1.0, 0.5)
    tang = C.T @ a / C.shape[0] / cnorm[:, None]
    zeta = np.hstack([tang, pack.z])
    return CoefficientState(k0, pack.K, zeta.shape[1], zeta, pack.omega.copy(), eps, pack.xi.copy())


# --- verification ---------------------------------------------------------------------


_FD6 = {
    1: np.array([0.0, -1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60, 0.0]),
    2: np.array([0.0, 1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90, 0.0]),
    3: np.array([-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0.0, -61 / 30, 169 / 120, -3 / 10, 7 / 240]),
}


def _fd6(f: np.ndarray, h: float, order: int) -> np.ndarray:
    """Sixth-order central differences of an even function on the half grid.

    Past the wall the samples are continued oddly about ``f(1)``.
    """
    ext = np.concatenate([f[4:0:-1], f, 2.0 * f[-1] - f[-2:-6:-1]])
    n = f.size
    out = np.zeros(n)
    for k, ck in enumerate(_FD6[order]):
        if ck:
            out += ck * ext[k : k + n]
    return out / h**order


def tail_correction(result: SolveResult) -> np.ndarray:
    """Components of the solution beyond the ``J`` retained eigenfunctions.

    For every angular mode ``l`` solve ``(-d^2 + Q + (omega . l)^2) t = -(I - P_J) N_l / eps``
    on the fine grid, constrained to the orthogonal complement of ``phi_1..phi_J``
    (a bordered banded system, solved through its Schur complement).  The complement carries no small divisors, so this
    is a single linear correction of the Galerkin solution; it is stored on the
    result and used by the flow assembly and the Euler check.
    """
    st, fam, spec = result.state, result.family, result.spectrum
    eq = fam.eq
    gal = Galerkin(spec, st.kappa0, st.K, st.J, y_stride=1)
    N, _ = _nonlinear(gal, fam, st.zeta, st.eps) if st.eps else (np.zeros((gal.npts, eq.y.size)), None)
    Nl = gal.C.T @ N / gal.npts / gal.cnorm[:, None] / (st.eps or 1.0)
    b = -(Nl - (Nl @ gal.PW.T) @ gal.Phi)
    n = eq.y.size - 1
    H = eq.h
    Phi = gal.Phi[:, :n]
    PW = gal.PW[:, :n]
    wl = st.modes @ st.omega
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0 / H**2
    ab[0, 1] = -2.0 / H**2  # ghost node at y = 0
    ab[2, :-1] = -1.0 / H**2
    out = np.zeros((gal.nm, eq.y.size))
    for i in range(gal.nm):
        ab[1] = 2.0 / H**2 + eq.q[:n] + wl[i] ** 2
        # Schur complement of the border: t = A^-1 (b - Phi^T lam) with PW t = 0
        X = linalg.solve_banded((1, 1), ab, np.column_stack([b[i, :n], Phi.T]))
        lam = np.linalg.solve(PW @ X[:, 1:], PW @ X[:, 0])
        out[i, :n] = X[:, 0] - X[:, 1:] @ lam
    result.tail = out
    return out


def verify_euler(result: SolveResult, n_theta: int | None = None, y_stride: int = 1,
                 with_tail: bool = True) -> float:
    """``sup |psi_x (Lap psi)_y - psi_y (Lap psi)_x| / (|grad psi| |grad Lap psi|)``.

    The angle derivatives are exact on the cosine modes; ``phi_j''`` and ``phi_j'''``
    follow from the eigenvalue equation, the shear from its own ODE, and only the
    shift ``h`` is differenced (sixth order).
    """
    st, fam = result.state, result.family
    eq = fam.eq
    k0, K = st.kappa0, st.K
    n = n_theta or 2 * (2 * K + 1) + 1
    t = 2.0 * np.pi * np.arange(n) / n
    theta = np.stack(np.meshgrid(*([t] * k0), indexing="ij"), axis=-1).reshape(-1, k0)
    modes = st.modes
    arg = theta @ modes.T
    C, S = np.cos(arg), np.sin(arg)
    wl = modes @ st.omega
    idx = np.arange(0, eq.y.size, y_stride)
    spec = result.spectrum
    phi = spec.phi[: st.J][:, idx]
    dphi = spec.dphi[: st.J][:, idx]
    mu = spec.eigenvalues[: st.J]
    q = eq.q[idx]
    dq = eq.potential.derivative(eq.y[idx], 1)
    d2phi = (q[None] - mu[:, None]) * phi
    d3phi = dq[None] * phi + (q[None] - mu[:, None]) * dphi
    hh = fam.shift
    H = eq.h
    h1, h3 = (_fd6(hh, H, o)[idx] for o in (1, 3))
    e = st.eps
    z = st.zeta
    Wz2 = (wl**2)[:, None] * z
    psi_y = eq.dpsi[idx] + h1 + e * (C @ z @ dphi)
    psi_x = -e * ((S * wl) @ z @ phi)
    lap_y = eq.d3psi[idx] + h3 + e * (C @ (z @ d3phi - Wz2 @ dphi))
    lap_x = -e * ((S * wl) @ (z @ d2phi - Wz2 @ phi))
    if with_tail:
        T = result.tail if result.tail is not None else tail_correction(result)
        t0, t1, t2, t3 = T[:, idx], *(np.stack([_fd6(r, H, o) for r in T])[:, idx] for o in (1, 2, 3))
        psi_y = psi_y + e * (C @ t1)
        psi_x = psi_x - e * ((S * wl) @ t0)
        lap_y = lap_y + e * (C @ (t3 - (wl**2)[:, None] * t1))
        lap_x = lap_x - e * ((S * wl) @ (t2 - (wl**2)[:, None] * t0))
    br = psi_x * lap_y - psi_y * lap_x
    g1 = np.sqrt(psi_x**2 + psi_y**2).max()
    g3 = np.sqrt(lap_x**2 + lap_y**2).max()
    val = float(np.abs(br).max() / (g1 * g3))
    result.euler_residual = val
    return val
