import math

import numpy as np
import pytest

from qpeuler.errors import ConfigError
from qpeuler.frequencies import (DiophantineSpec, is_diophantine, lattice, resonance_measure, scan_E_diophantine,
                                 small_ell_radius, transversality_probe)

GOLDEN = np.array([1.0, (1 + math.sqrt(5)) / 2])


def test_lattice_is_a_half_lattice():
    L = lattice(2, 5)
    assert L.shape[0] == ((2 * 5 + 1) ** 2 - 1) // 2
    s = {tuple(v) for v in L}
    assert not any(tuple(-v) in s for v in L)


def test_golden_mean_is_diophantine():
    res = is_diophantine(GOLDEN, DiophantineSpec(0.2, 1.0, 100))
    assert res.passed and bool(res)
    # the worst direction is a pair of consecutive Fibonacci numbers
    a, b = sorted(abs(v) for v in res.ell)
    fib = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144]
    assert any((a, b) == (fib[i], fib[i + 1]) for i in range(len(fib) - 1))


def test_rational_vector_fails():
    res = is_diophantine(np.array([1.0, 1.5]), DiophantineSpec(1e-3, 2.0, 20))
    assert not res.passed and res.value == 0.0
    assert res.ell in {(3, -2), (-3, 2)}


def test_one_frequency_always_passes():
    assert is_diophantine(np.array([2.7]), DiophantineSpec(0.5, 1.0, 50)).passed


@pytest.mark.parametrize("kw", [dict(upsilon=1.0, tau=2.0), dict(upsilon=0.1, tau=0.5),
                                dict(upsilon=0.1, tau=2.0, L_max=5)])
def test_diophantine_spec_validation(kw):
    with pytest.raises(ConfigError):
        DiophantineSpec(**kw)


def _crossing(A):
    A = np.atleast_1d(A)
    return np.column_stack([np.ones_like(A), A])


def test_resonance_measure_on_a_crossing():
    # omega(A) = (1, A) crosses the resonance l = (1, -1) at A = 1
    rep = resonance_measure(1.0, 1e-4, DiophantineSpec(1e-3, 1.0, 10), 4000, _crossing, seed=1)
    # |A - 1| < upsilon / |l| = 1e-3 / sqrt(2) fails on a window of half-width 1e-2
    assert rep.failing_fraction == pytest.approx(1e-3 / math.sqrt(2) / 1e-2, abs=0.01)
    assert rep.worst_pairs[0][1] in {(1, -1), (-1, 1)}
    smaller = resonance_measure(1.0, 1e-4, DiophantineSpec(1e-4, 1.0, 10), 4000, _crossing, seed=1)
    assert smaller.failing_fraction < rep.failing_fraction


def test_transversality_of_a_linear_family():
    rep = transversality_probe(lambda A: np.column_stack([np.ones_like(A), 2.0 * A]), 3.0, h=1e-2, n_max=1)
    # d/dA (omega . l) = 2 l_2; l = (1, 0) is only seen at order 0
    assert rep.rho0_estimate > 0
    np.testing.assert_allclose(rep.derivatives[1], [0.0, 2.0], atol=1e-8)


def test_scan_and_radius():
    sc = scan_E_diophantine((0.9, 1.1), 1e-3, 1.0, 21, _crossing, L_max=10)
    assert 0 < sc.failing_fraction < 1
    assert not sc.passed[10]
    assert small_ell_radius(1e-3, 1e-4, 2.0) == pytest.approx(0.1 ** (1 / 3))
