"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a one-line verdict; the lines are printed in the pytest
terminal summary (and directly when this file is run as a script).
"""

import math
import warnings

import mpmath
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qpeuler.errors import TruncationWarning
from qpeuler.flowfield import assemble_flow, encircles, find_stagnation, trace_level_sets
from qpeuler.frequencies import DiophantineSpec, SpectralSource, resonance_measure, window_source
from qpeuler.nonlinearity import Nonlinearity, RegularizedFamily, solve_shift
from qpeuler.potential import Potential, PotentialSpec
from qpeuler.qp_solver import (SolverConfig, linear_solution, solve_with_counterterm, tail_correction,
                               verify_euler)
from qpeuler.shear import couette_distance, fixed_point_equilibrium
from qpeuler.spectrum import alpha0, beta, compute_spectrum, find_m_threshold, secular_roots

CASES = {1: 0.5, 2: 0.35, 3: 0.25}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def _setup(kappa0, r, m):
    spec = PotentialSpec.from_width(kappa0, r, m)
    corr, eq, _ = fixed_point_equilibrium(spec)
    return spec, Potential(spec, corr), eq


def _spectrum(kappa0, r, m, k=None):
    spec, pot, eq = _setup(kappa0, r, m)
    return spec, eq, compute_spectrum(pot, k or kappa0 + 3, n_nodes=eq.y.size, kappa0=kappa0)


def test_c01_spectral_count():
    rows, ok = [], True
    for k0, r in CASES.items():
        m_bar = find_m_threshold(k0, r)
        for m in (m_bar, 2 * m_bar):
            spec, _, sp = _spectrum(k0, r, m)
            good = sp.negative_count == k0 and sp.eigenvalues[0] > -spec.E**2
            ok &= good
            rows.append(f"k0={k0} m={m} neg={sp.negative_count}")
    report(1, "spectral count", ok, "; ".join(rows))
    assert ok


def test_c02_secular_convergence():
    rows, ok = [], True
    for k0, r in CASES.items():
        E = (k0 + 0.25) * math.pi / r
        lam_inf = secular_roots(E, r, k0).lambdas
        gaps = []
        for m in (40, 80, 160):
            _, _, sp = _spectrum(k0, r, m)
            gaps.append(np.abs(sp.frequencies[:k0] - lam_inf))
        gaps = np.array(gaps)
        dec = bool(np.all(np.diff(gaps, axis=0) < 0))
        rel = float(np.max(gaps[-1] / lam_inf))
        ok &= dec and rel <= 1e-2
        rows.append(f"k0={k0} decreasing={dec} rel={rel:.2e}")
    report(2, "secular convergence", ok, "; ".join(rows))
    assert ok


def _alpha0_bisection(kappa0, j, digits=40):
    with mpmath.workdps(digits):
        c = mpmath.mpf(kappa0) + mpmath.mpf(1) / 4
        f = lambda a: mpmath.sin(mpmath.pi * a) - (j - mpmath.mpf(1) / 2 - a) / c
        lo, hi = mpmath.mpf(0), mpmath.mpf(1) / 2
        for _ in range(140):
            mid = (lo + hi) / 2
            if f(lo) * f(mid) <= 0:
                hi = mid
            else:
                lo = mid
        return float((lo + hi) / 2)


def test_c03_asymptotic_roots():
    err = abs(alpha0(1, 1) - _alpha0_bisection(1, 1))
    # base depth chosen so that beta^2 at 4x base is still above double resolution
    Es = np.array([4.5, 9.0, 18.0])
    xs, ys = [], []
    for E in Es:
        r = 1.25 * math.pi / E
        lam = secular_roots(E, r, 1).lambdas[0]
        ys.append(math.log(abs(lam / E - math.cos(math.pi * alpha0(1, 1)))))
        xs.append(math.log(beta(1, 1, E) ** 2))
    slope = float(np.polyfit(xs, ys, 1)[0])
    ok = err <= 1e-10 and abs(slope - 1.0) <= 0.2
    report(3, "asymptotic roots", ok, f"|alpha0 - bisection|={err:.1e}, slope={slope:.4f}")
    assert ok


def test_c04_couette_proximity():
    d = []
    for r in (0.2, 0.1, 0.05):
        _, _, eq = _setup(1, r, 160)
        d.append(couette_distance(eq))
    ratios = [d[0] / d[1], d[1] / d[2]]
    ok = all(1.2 <= q <= 1.8 for q in ratios)
    report(4, "Couette proximity", ok, f"distances={[f'{v:.4g}' for v in d]}, ratios={[f'{q:.3f}' for q in ratios]}")
    assert ok


def test_c05_critical_points():
    rows, ok = [], True
    for k0, r in CASES.items():
        errs = []
        for m in (40, 80, 160):
            spec, _, eq = _setup(k0, r, m)
            cp = np.asarray(eq.critical_points)
            count = 2 * (cp.size - 1) + 1
            target = np.arange(cp.size) * math.pi / spec.E
            errs.append(float(np.max(np.abs(cp - target))))
        tol = 5e-2 * math.pi / spec.E
        good = count == 2 * k0 + 1 and errs[-1] <= tol and errs[-1] <= errs[0]
        ok &= good
        rows.append(f"k0={k0} count={count} err160={errs[-1]:.2e} (tol {tol:.2e}) errs={[f'{e:.1e}' for e in errs]}")
    report(5, "critical points", ok, "; ".join(rows))
    assert ok


def test_c06_corrector_annihilation():
    rows, ok = [], True
    for k0, r in CASES.items():
        m = 320 if k0 == 3 else 160
        spec, pot, eq = _setup(k0, r, m)
        qmax = np.abs(eq.q).max()
        worst = 0.0
        for p in range(1, k0 + 1):
            der = pot.jet(np.array([eq.critical_points[p]]), 2 * spec.S - 1).derivatives()[:, 0]
            worst = max(worst, float(np.max(np.abs(der[1::2]))))
        good = worst <= 1e-8 * qmax
        ok &= good
        rows.append(f"k0={k0} m={m} max|odd|/|Q|={worst / qmax:.1e}")
    report(6, "corrector annihilation", ok, "; ".join(rows))
    assert ok


def test_c07_nonlinearity_identities():
    rows, ok = [], True
    for k0, r in ((1, 0.5), (2, 0.35)):
        spec, _, eq = _setup(k0, r, 160)
        nl = Nonlinearity(eq)
        e1 = e2 = 0.0
        for s in nl.strips:
            i = np.arange(s.i_lo, s.i_hi + 1)
            e1 = max(e1, float(np.abs(nl.F(s.p, eq.psi[i]) - eq.d2psi[i]).max()))
            # at critical points F' is only a limit; stay one cell away
            inner = i[(eq.y[i] > s.y_lo + eq.h) & (eq.y[i] < s.y_hi - eq.h)]
            d1 = nl.F(s.p, eq.psi[inner], 1).derivatives()[1]
            e2 = max(e2, float(np.abs(d1 - eq.q[inner]).max()))
        r1 = e1 / np.abs(eq.d2psi).max()
        r2 = e2 / spec.E**2
        good = r1 <= 1e-6 and r2 <= 1e-5
        ok &= good
        rows.append(f"k0={k0} |psi''-F|/|psi''|={r1:.1e} |F'-Q|/E^2={r2:.1e}")
    report(7, "nonlinearity identities", ok, "; ".join(rows))
    assert ok


def test_c08_regularization_order():
    _, _, eq = _setup(1, 0.5, 160)
    nl = Nonlinearity(eq)
    idx = np.arange(eq.y.size)
    etas = np.array([1e-2, 5e-3, 2.5e-3])
    gaps, norms = [], []
    for eta in etas:
        fam = RegularizedFamily(nl, eta, 3)
        gaps.append(float(np.abs(fam.forcing_at(idx)).max()))
        norms.append(float(np.abs(solve_shift(fam)).max()))
    slope = float(np.polyfit(np.log(etas), np.log(gaps), 1)[0])
    shrink = [norms[0] / norms[1], norms[1] / norms[2]]
    ok = slope >= 4.0 and min(shrink) >= 2.0 ** (3 - 1)
    report(8, "regularization order", ok,
           f"gaps={[f'{g:.2e}' for g in gaps]} slope={slope:.2f}, |h| ratios={[f'{q:.1f}' for q in shrink]}")
    assert ok


def test_c09_solver_convergence(k1_solve):
    res = k1_solve(1e-4)
    hist = res.residual_history
    euler = res.euler_residual if res.euler_residual is not None else verify_euler(res)
    conv = hist[-1] < 1e-11
    Cq = res.quadratic_constant
    quad = Cq is not None and Cq <= 10.0
    ok = conv and quad and euler <= 1e-7 and res.leakage <= 1e-13
    report(9, "solver convergence", ok,
           f"residuals={[f'{h:.1e}' for h in hist]} C_quad={Cq:.1e} euler={euler:.1e} leakage={res.leakage:.1e}")
    assert ok


def test_c10_frequency_asymptotics(k1_solve, k1_problem):
    lam = k1_problem.spectrum.frequencies[0]
    ratios, rems = [], []
    for eps in (1e-3, 1e-4, 1e-5):
        res = k1_solve(eps)
        ratios.append(abs(res.omega_tilde[0] - lam) / math.sqrt(eps))
        lin = linear_solution(k1_problem.spectrum, (1.0,), eps, 12, 24)
        # ||r_eps|| / eps in rescaled coefficients
        rems.append(float(np.abs(res.state.zeta - lin.zeta).max()))
    bounded = max(ratios) <= 3.0 * ratios[0]
    mono = rems[0] > rems[1] > rems[2]
    ok = bounded and mono
    report(10, "frequency asymptotics", ok,
           f"|dw|/sqrt(eps)={[f'{q:.2e}' for q in ratios]} |r|/eps={[f'{q:.2e}' for q in rems]}")
    assert ok


def test_c11_counterterm_consistency(k1_solve, k1_problem):
    lam = k1_problem.spectrum.frequencies[:1]
    res = k1_solve(1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        ct = solve_with_counterterm(k1_problem, SolverConfig(1e-4, (1.0,), steps=1), res.omega_tilde)
        back = float(np.abs(ct.alpha - lam).max())
        Cs = []
        for eps in (1e-3, 1e-4, 1e-5):
            a = solve_with_counterterm(k1_problem, SolverConfig(eps, (1.0,), steps=1), lam).alpha
            Cs.append(float(np.abs(a - lam).max()) / math.sqrt(eps))
    stable = max(Cs) <= 3.0 * Cs[0]
    ok = back <= 1e-8 and stable
    report(11, "counterterm consistency", ok, f"|alpha(w~) - w_m|={back:.1e}, C(eps)={[f'{c:.2e}' for c in Cs]}")
    assert ok


def test_c12_measure_trend():
    k0, r, m, eps = 2, 0.35, 160, 1e-4
    E = (k0 + 0.25) * math.pi / r
    omap = window_source(SpectralSource(k0, r, m), E, eps)
    fr = []
    for ups in (1e-2, 1e-3, 1e-4):
        rep = resonance_measure(E, eps, DiophantineSpec(ups, 2.0, 100), 2000, omap, seed=0)
        fr.append(rep.failing_fraction)
    ok = fr[0] >= fr[1] >= fr[2] and fr[2] == 0.0
    report(12, "measure trend", ok, f"failing fractions={fr} (kappa0=2, eps=1e-4, L_max=100)")
    assert ok


def test_c13_cats_eye(k1_solve):
    res = k1_solve(1e-4)
    if res.tail is None:
        tail_correction(res)
    flow = assemble_flow(res)
    pts = [p for p in find_stagnation(flow) if abs(p.location[1]) < 1e-6]
    pts.sort(key=lambda p: p.location[0])
    w = res.omega_tilde[0]
    types = [p.type for p in pts]
    alternate = len(pts) >= 3 and all(a != b for a, b in zip(types, types[1:]))
    spacing = np.diff([p.location[0] for p in pts])
    sp_err = float(np.max(np.abs(spacing * w / math.pi - 1.0))) if spacing.size else math.inf
    closed = 0
    centers = [p for p in pts if p.type == "center"]
    for c in centers:
        sad = min((p for p in pts if p.type == "saddle"), key=lambda s: abs(s.location[0] - c.location[0]))
        half = abs(sad.location[0] - c.location[0])
        zoom = assemble_flow(res, window=(c.location[0] - 1.5 * half, c.location[0] + 1.5 * half), nx=241,
                             y=np.linspace(-0.05, 0.05, 201), evaluator=flow.evaluator)
        ls = trace_level_sets(zoom, levels=[c.psi + 0.5 * (sad.psi - c.psi)])[0]
        closed += any(cl and encircles(pl, c.location) for pl, cl in zip(ls.polylines, ls.closed))
    ok = alternate and sp_err <= 0.02 and closed == len(centers) > 0
    report(13, "cat's-eye topology", ok,
           f"{len(pts)} points on y=0, alternating={alternate}, spacing error={sp_err:.1e}, "
           f"closed around {closed}/{len(centers)} centers")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-q"]))
