import json
import math
import warnings

import numpy as np
import pytest

from qpeuler.errors import (AliasWarning, ChartError, ConfigError, SmallDivisorError, StagnationError,
                            TruncationWarning)
from qpeuler.qp_solver import (CoefficientState, Galerkin, SolverConfig, _jacobian_zeta, _ladder,
                               _quadratic_constant, action_angle_pack, action_angle_unpack, diag_inverse,
                               invert_counterterm, linear_solution, mode_set, newton_solve, residual,
                               solve_with_counterterm, verify_euler)

SMALL = dict(K=4, J=8)


def _quiet(fn, *a, **kw):
    with warnings.catch_warnings():
        # K = 4 truncations trip both diagnostics by design
        warnings.simplefilter("ignore", TruncationWarning)
        warnings.simplefilter("ignore", AliasWarning)
        return fn(*a, **kw)


def test_mode_set_and_state_rows():
    m = mode_set(2, 2)
    assert m.shape == (1 + 12, 2)
    st = CoefficientState(2, 2, 3, np.zeros((13, 3)), np.ones(2), 0.1, np.ones(2))
    assert st.row((0, -1)) == st.row((0, 1))
    with pytest.raises(KeyError):
        st.row((3, 0))
    with pytest.raises(ValueError):
        CoefficientState(2, 2, 3, np.zeros((12, 3)), np.ones(2), 0.1, np.ones(2))


def test_linear_solution(k1_problem):
    sp = k1_problem.spectrum
    st = linear_solution(sp, (2.0,), 1e-3, 4, 6)
    assert st.zeta[st.row((1,)), 0] == pytest.approx(math.sqrt(2.0))
    assert np.count_nonzero(st.zeta) == 1
    np.testing.assert_allclose(st.u, 1e-3 * st.zeta)
    big = st.embed(6, 8)
    assert big.zeta[big.row((1,)), 0] == st.zeta[st.row((1,)), 0]
    with pytest.raises(ConfigError):
        linear_solution(sp, (1.0, 1.0), 1e-3, 4, 6)
    with pytest.raises(ConfigError):
        linear_solution(sp, (-1.0,), 1e-3, 4, 6)


def test_zero_amplitude_limit_is_the_linear_torus(k1_problem):
    res = _quiet(newton_solve, k1_problem, SolverConfig(0.0, (1.0,), **SMALL))
    lin = linear_solution(k1_problem.spectrum, (1.0,), 0.0, 4, 8)
    assert res.iterations == 0
    np.testing.assert_array_equal(res.state.zeta, lin.zeta)
    assert res.omega_tilde[0] == lin.omega[0]
    assert res.residual_history[-1] < 1e-12


def test_zero_state_has_zero_residual(k1_problem):
    fam = k1_problem.family(1e-4)
    gal = Galerkin(k1_problem.spectrum, 1, 4, 8)
    st = linear_solution(k1_problem.spectrum, (1.0,), 1e-4, 4, 8)
    st.zeta[:] = 0.0
    assert np.abs(residual(st, fam, gal)).max() == 0.0


def test_jacobian_against_finite_differences(k1_problem):
    eps = 1e-3
    fam = k1_problem.family(eps)
    gal = Galerkin(k1_problem.spectrum, 1, 4, 8)
    st = linear_solution(k1_problem.spectrum, (1.0,), eps, 4, 8)
    rng = np.random.default_rng(0)
    st.zeta += 0.1 * rng.standard_normal(st.zeta.shape)
    v = rng.standard_normal(st.zeta.shape)
    Jz = _jacobian_zeta(st, fam, gal, gal.divisors(st.omega))
    exact = Jz @ v.ravel()
    d = 1e-6
    a, b = st.copy(), st.copy()
    a.zeta += d * v
    b.zeta -= d * v
    fd = ((residual(a, fam, gal) - residual(b, fam, gal)) / (2 * d)).ravel()
    assert np.linalg.norm(fd - exact) <= 1e-5 * np.linalg.norm(exact)


def test_diag_inverse(k1_problem):
    gal = Galerkin(k1_problem.spectrum, 1, 4, 8)
    w = k1_problem.spectrum.frequencies[:1]
    rhs = np.random.default_rng(1).standard_normal((gal.nm, gal.J))
    out, zeroed = diag_inverse(gal, w, rhs, 1e-12)
    D = gal.divisors(w)
    ok = np.abs(D) >= 1e-12
    np.testing.assert_allclose(-D[ok] * out[ok], rhs[ok])
    # the pinned row (l = 1, j = 1) has a vanishing divisor
    assert D[1, 0] == pytest.approx(0.0, abs=1e-9)
    _, zeroed = diag_inverse(gal, w, rhs, 1e6)
    assert ((1,), 1) in zeroed and all(j == 1 for _, j in zeroed)


def test_small_divisor_is_reported(k1_problem):
    lam = k1_problem.spectrum.frequencies[0]
    # mode l = 2 resonates with the tangential frequency when omega = lam / 2
    with pytest.raises(SmallDivisorError) as err:
        solve_with_counterterm(k1_problem, SolverConfig(1e-4, (1.0,), **SMALL), [lam / 2])
    assert err.value.mode == ((2,), 1)


def test_stagnation_is_reported(k1_problem):
    cfg = SolverConfig(1e-4, (1.0,), tol=1e-30, steps=1, max_iter=2, **SMALL)
    with pytest.raises(StagnationError):
        _quiet(newton_solve, k1_problem, cfg)


def test_ladder_and_quadratic_constant():
    cfg = SolverConfig(1e-4, (1.0,), K=12, schedule=True, K0=2)
    assert _ladder(cfg) == [2, 3, 5, 11, 12]
    assert _ladder(SolverConfig(1e-4, (1.0,), K=7)) == [7]
    assert _quadratic_constant([1e-2, 1e-4, 1e-8]) == pytest.approx(1.0)
    assert _quadratic_constant([1e-3, 1e-14]) is None


def test_small_truncation_solve(k1_problem, tmp_path):
    res = _quiet(newton_solve, k1_problem, SolverConfig(1e-4, (1.0,), steps=1, **SMALL))
    assert res.residual_history[-1] < 1e-11
    assert res.leakage <= 1e-13
    assert res.min_divisor > 0
    # omega shift is second order in the amplitude: eps^2 scale times O(1)
    lam = k1_problem.spectrum.frequencies[0]
    assert abs(res.omega_tilde[0] - lam) < 1e-4
    res.write_manifest(tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["omega_tilde"] == res.omega_tilde.tolist()


def test_action_angle_roundtrip(k1_solve, k1_problem):
    st = k1_solve(1e-4).state
    pack = action_angle_pack(st, k1_problem.spectrum)
    back = action_angle_unpack(pack, st.eps)
    assert np.abs(back.zeta - st.zeta).max() <= 1e-12
    assert np.abs(pack.I).max() < 1e-2
    pack.I = pack.I - 10.0
    with pytest.raises(ChartError):
        action_angle_unpack(pack)


def test_euler_residual(k1_problem, k1_solve):
    flat = _quiet(newton_solve, k1_problem, SolverConfig(0.0, (1.0,), **SMALL))
    # the pure shear (plus shift) is an exact steady state
    assert verify_euler(flat, with_tail=False) < 1e-12
    res = k1_solve(1e-4)
    without = verify_euler(res, with_tail=False)
    with_tail = verify_euler(res)
    assert with_tail <= 1e-7 < without
    assert res.euler_residual == with_tail


def test_counterterm_inversion_recovers_frequency(k1_problem, k1_solve):
    ref = k1_solve(1e-4, **SMALL)
    cfg = SolverConfig(1e-4, (1.0,), steps=1, **SMALL)
    omega, res = _quiet(invert_counterterm, k1_problem, cfg)
    assert abs(omega[0] - ref.omega_tilde[0]) <= 1e-8
    np.testing.assert_allclose(res.alpha, k1_problem.spectrum.frequencies[:1], atol=1e-12)
