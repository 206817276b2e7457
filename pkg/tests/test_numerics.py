import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpeuler import _kernels_py, kernels
from qpeuler.errors import BracketError, NonFiniteStateError, ShapeError
from qpeuler.jet import Jet, jet_eval, logcosh, tanh
from qpeuler.numerics import Grid1D, cumulative_hermite, eig_sym, find_root, integrate_ode


def test_rk4_matches_exact_oscillator():
    n = 2001
    y = np.linspace(0.0, 1.0, n)
    k = 7.0
    q = np.full(n, -k * k)
    u, v, bad = kernels.rk4_linear2(q, q[:-1], y[1] - y[0], 0.0, 1.0)
    assert bad == -1
    assert np.abs(u - np.sin(k * y) / k).max() < 1e-10
    assert np.abs(v - np.cos(k * y)).max() < 1e-9


def test_rk4_reports_overflow():
    q = np.full(50, 1e300)
    _, _, bad = kernels.rk4_linear2(q, q[:-1], 1.0, 1.0, 1.0)
    assert bad > 0


def test_compiled_and_python_kernels_agree():
    rng = np.random.default_rng(3)
    q = -400.0 + 50 * rng.standard_normal(513)
    qm = 0.5 * (q[1:] + q[:-1])
    a = _kernels_py.rk4_linear2(q, qm, 1 / 512, 0.0, 1.0, 2.0)
    b = kernels.rk4_linear2(q, qm, 1 / 512, 0.0, 1.0, 2.0)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13, atol=0)
    c = np.array([[0.0, 0.0], [1.0, 2.0], [0.3, 0.1], [0.05, 0.0]])
    t = np.array([0.4, 1.1])
    x1 = _kernels_py.taylor_invert(c, t, np.zeros(2), np.ones(2))
    x2 = kernels.taylor_invert(c, t, 0.0, 1.0)
    np.testing.assert_allclose(x1, x2, rtol=1e-14)
    poly = c[0] + c[1] * x2 + c[2] * x2**2 + c[3] * x2**3
    np.testing.assert_allclose(poly, t, rtol=1e-14)


def test_pure_fallback_selected_by_environment():
    env = dict(os.environ, QPEULER_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from qpeuler.kernels import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.5, 1.5))
def test_jet_tanh_derivatives_against_mpmath(x0, a):
    f = lambda t: tanh(a * t + 0.3) * (t * t + 1.0)
    d = jet_eval(f, x0, 4).derivatives()
    for n in range(5):
        ref = float(mpmath.diff(lambda t: mpmath.tanh(a * t + 0.3) * (t * t + 1), x0, n))
        assert d[n] == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_jet_reciprocal_and_power():
    x = Jet.variable(0.7, 6)
    one = (x * (1.0 / x)).c
    assert one[0] == pytest.approx(1.0)
    assert np.abs(one[1:]).max() < 1e-13
    d = (x**2.5).derivatives()
    assert d[3] == pytest.approx(2.5 * 1.5 * 0.5 * 0.7**-0.5, rel=1e-12)


def test_logcosh_large_argument_is_stable():
    assert float(logcosh(800.0)) == pytest.approx(800.0 - math.log(2.0))
    j = logcosh(Jet.variable(40.0, 3))
    assert j.derivatives()[1] == pytest.approx(math.tanh(40.0))


def test_jet_eval_rejects_negative_order():
    with pytest.raises(ValueError):
        jet_eval(lambda t: t, 0.0, -1)


def test_grid_validation():
    with pytest.raises(ShapeError):
        Grid1D(np.linspace(0, 1, 8))
    with pytest.raises(ShapeError):
        Grid1D(np.r_[np.linspace(0, 1, 20), 0.5])
    g = Grid1D.uniform(0.0, 1.0, 33)
    assert g.is_uniform and g.spacing == pytest.approx(1 / 32)


def test_integrate_ode_and_nonfinite():
    g = Grid1D.uniform(0.0, 1.0, 201)
    out = integrate_ode(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], g)
    assert abs(out[-1, 0] - math.sin(1.0)) < 1e-10
    with np.errstate(over="ignore"), pytest.raises(NonFiniteStateError):
        integrate_ode(lambda t, y: y * 1e200, [1.0], g)


def test_find_root_and_bracket_error():
    assert find_root(math.cos, (1.0, 2.0)) == pytest.approx(math.pi / 2, abs=1e-14)
    with pytest.raises(BracketError):
        find_root(math.cos, (0.0, 1.0))


def test_eig_sym_and_cumulative_hermite():
    A = np.diag([3.0, 1.0, 2.0])
    w, _ = eig_sym(A, 2)
    np.testing.assert_allclose(w, [1.0, 2.0])
    with pytest.raises(ShapeError):
        eig_sym(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
    x = np.linspace(0.0, 2.0, 41)
    I = cumulative_hermite(np.cos(x), -np.sin(x), np.sin(x), x)
    assert np.abs(I - np.sin(x)).max() < 1e-11
