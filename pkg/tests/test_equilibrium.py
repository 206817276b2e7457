import json
import math

import mpmath
import numpy as np
import pytest

from qpeuler.errors import ConfigError, DegenerateAnchorError, SingularPointError
from qpeuler.potential import (Corrector, Potential, PotentialSpec, StepPotential, build_corrector, eval_Q,
                               eval_Q_infty, h_profile)
from qpeuler.shear import couette_distance, limit_constants, solve_shear


def test_spec_enforces_width_constraint():
    s = PotentialSpec.from_width(2, 0.35, 160)
    assert s.E * s.r == pytest.approx(2.25 * math.pi)
    with pytest.raises(ConfigError):
        PotentialSpec(E=10.0, r=0.5, m=160, S=3, kappa0=1, T=8.0, gamma=0.5**5)
    with pytest.raises(ConfigError):
        PotentialSpec.from_width(1, 1.5, 160)


def test_profile_is_a_smoothed_step():
    z = np.array([0.0, 0.5, 1.0, 1.5])
    h = h_profile(z, 160).value
    assert h[0] == pytest.approx(1.0, abs=1e-12)
    assert h[2] == pytest.approx(0.5)
    assert h[3] < 1e-12
    # overflow-free far out
    assert np.isfinite(h_profile(np.array([50.0]), 10_000).value).all()


def test_profile_jet_against_mpmath():
    m, z0 = 40, 0.8
    ref = lambda z: 1 / ((mpmath.cosh(z) / mpmath.cosh(1)) ** m + 1)
    d = h_profile(np.array([z0]), m, 3).derivatives()[:, 0]
    for n in range(4):
        assert d[n] == pytest.approx(float(mpmath.diff(ref, z0, n)), rel=1e-9)


def test_corrector_annihilates_odd_derivatives():
    spec = PotentialSpec.from_width(2, 0.35, 160)
    anchors = spec.limit_anchors()
    corr = build_corrector(spec, anchors)
    pot = Potential(spec, corr)
    qmax = np.abs(pot.values(np.linspace(0, 1, 2001))).max()
    for a in anchors:
        d = pot.jet(np.array([a, -a]), 5).derivatives()
        assert np.abs(d[1::2]).max() <= 1e-8 * qmax
    back = Corrector.from_dict(json.loads(json.dumps(corr.to_dict())))
    y = np.linspace(0, 1, 101)
    np.testing.assert_allclose(Potential(spec, back).values(y), pot.values(y), rtol=1e-14, atol=1e-12)


def test_corrector_rejects_bad_anchors():
    spec = PotentialSpec.from_width(2, 0.35, 160)
    with pytest.raises(DegenerateAnchorError):
        build_corrector(spec, [0.1])
    with pytest.raises(DegenerateAnchorError):
        build_corrector(spec, [0.1, 0.4])


def test_step_limit():
    spec = PotentialSpec.from_width(1, 0.5, 160)
    assert eval_Q_infty(spec, 0.2) == -spec.E**2
    assert eval_Q_infty(spec, 0.7) == 0.0
    with pytest.raises(SingularPointError):
        eval_Q_infty(spec, 0.5)
    assert eval_Q(spec, None, 0.0) == pytest.approx(-spec.E**2)


def test_limit_constants_close_the_matching():
    E, r = 7.5, 0.33
    A, B = limit_constants(E, r)
    # psi' = B sin(E y) inside meets y - A outside with matching value and slope
    assert B * math.sin(E * r) == pytest.approx(r - A)
    assert B * E * math.cos(E * r) == pytest.approx(1.0)


def test_step_shear_matches_closed_form():
    E, r = 1.25 * math.pi / 0.5, 0.5
    eq = solve_shear(StepPotential(E, r), 8193, E=E, r=0.5, kappa0=0, locate=False)
    A, B = limit_constants(E, r)
    y = eq.y
    ref = np.where(y < r, B * np.sin(E * y), y - A)
    # the kink at y = r limits the RK4 sweep to first order there
    assert np.abs(eq.dpsi - ref).max() < 5e-3
    assert eq.psi[-1] == pytest.approx(0.5 * (1 - A) ** 2)


def test_equilibrium_shape(k1_problem):
    eq = k1_problem.eq
    assert eq.critical_points[0] == 0.0
    assert eq.critical_points[1] == pytest.approx(math.pi / eq.E, rel=5e-2)
    assert eq.d2psi[-1] == pytest.approx(1.0)
    i = np.searchsorted(eq.y, eq.critical_points[1])
    assert abs(eq.dpsi[i]) < 1e-2
    # psi''' = Q psi'
    np.testing.assert_allclose(eq.d3psi, eq.q * eq.dpsi)
    assert couette_distance(eq) > 0
