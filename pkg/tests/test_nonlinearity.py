import numpy as np
import pytest

from qpeuler.errors import EtaTooLargeError
from qpeuler.nonlinearity import (RegularizedFamily, _separations, chi, default_eta, eval_F_derivative,
                                  eval_q_eps, shift_residual, solve_shift)
from qpeuler.spectrum import _weights


@pytest.fixture(scope="module")
def nl(k1_problem):
    return k1_problem.nl


def test_cutoff_is_smooth_step():
    t = np.linspace(-2, 2, 401)
    c = chi(t)
    assert np.all((c >= 0) & (c <= 1))
    np.testing.assert_allclose(c, c[::-1], rtol=0, atol=1e-14)
    assert np.all(np.diff(c[200:]) <= 1e-15)
    np.testing.assert_array_equal(chi(np.array([0.0, 1.0, 2.0, 5.0])), [1.0, 1.0, 0.0, 0.0])
    # flat to all orders at the ends of the transition
    assert np.abs(chi(np.array([1.0 + 1e-3]), 3).c[1:]).max() < 1e-100


def test_strips_reproduce_shear(nl):
    eq = nl.eq
    for s in nl.strips:
        i = np.arange(s.i_lo, s.i_hi + 1)
        err = np.abs(nl.F(s.p, eq.psi[i]) - eq.d2psi[i]).max()
        assert err <= 1e-6 * np.abs(eq.d2psi).max()


def test_derivative_matches_finite_difference(nl):
    eq = nl.eq
    s = nl.strips[-1]
    lo, hi = s.psi_range
    t = np.linspace(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo), 7)
    d = 1e-6 * (hi - lo)
    fd = (nl.F(s.p, t + d) - nl.F(s.p, t - d)) / (2 * d)
    np.testing.assert_allclose(eval_F_derivative(nl, s.p, t, 1), fd, rtol=1e-5, atol=1e-6 * eq.E**2)


def test_increment_matches_absolute_difference(nl):
    eq = nl.eq
    idx = np.arange(100, eq.y.size - 100, 997)
    delta = 1e-4 * np.cos(idx)
    inc = nl.increment(idx, delta)
    ref = np.array([nl.F(nl.node_strip[i], eq.psi[i] + dl) - nl.F(nl.node_strip[i], eq.psi[i])
                    for i, dl in zip(idx, delta)])
    np.testing.assert_allclose(inc, ref, rtol=1e-6, atol=1e-9 * eq.E**2)


def test_eta_guard(nl):
    sep = _separations(nl).min()
    with pytest.raises(EtaTooLargeError):
        RegularizedFamily(nl, sep / 3.0, 3)
    assert default_eta(nl, 1e-4, 3) <= sep / 16


def test_shift_solves_regularized_equation(nl):
    fam = RegularizedFamily(nl, 5e-3, 3)
    h = solve_shift(fam)
    assert h is fam.shift
    assert shift_residual(fam) <= 1e-6 * nl.eq.E**2
    assert h[-1] == 0.0


def _l2(f, y):
    return float(np.sqrt(2.0 * _weights(y) @ (f * f)))


def test_q_eps_vanishes_and_is_bounded(k1_problem, nl):
    eps = 1e-4
    fam = RegularizedFamily(nl, default_eta(nl, eps, 3), 3)
    solve_shift(fam)
    y = nl.eq.y
    idx = np.arange(y.size)
    assert np.abs(eval_q_eps(fam, eps, idx, 0.0)).max() == 0.0
    assert np.abs(eval_q_eps(fam, 0.0, idx, 1.0)).max() == 0.0
    zeta = k1_problem.spectrum.phi[0]
    C = _l2(eval_q_eps(fam, eps, idx, zeta), y) / _l2(zeta, y)
    assert C <= 10.0


def test_q_eps_derivative_matches_finite_difference(k1_problem, nl):
    eps = 1e-4
    fam = RegularizedFamily(nl, default_eta(nl, eps, 3), 3)
    solve_shift(fam)
    idx = np.arange(0, nl.eq.y.size, 16)
    zeta = k1_problem.spectrum.phi[0][idx]
    d = 1e-4
    fd = (eval_q_eps(fam, eps, idx, zeta + d) - eval_q_eps(fam, eps, idx, zeta - d)) / (2 * d)
    exact = fam.dg(idx, fam.shift[idx], eps * zeta) / np.sqrt(eps)
    assert np.abs(fd - exact).max() <= 1e-6 * np.abs(exact).max()
