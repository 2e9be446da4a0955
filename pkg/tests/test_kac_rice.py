import math

import numpy as np
import pytest

from nodal_lab import kac_rice as kr
from nodal_lab.errors import (DegenerateCovariance, NotDegenerate, SingularAtZero,
                              UnsupportedOrder, ValidationError)
from nodal_lab.gaussian_fields import ANGULAR, covariance_kernel
from nodal_lab.lattice_spectral import cilleruelo_measure, lattice_nu4, resolve_measure
from nodal_lab.zero_counter import exact_second_factorial


def ctx(spec, u, conv="TwoPi"):
    return kr.KacRiceContext.from_measure(resolve_measure(spec), u, conv)


def k2_reference(kernel, t):
    """K2 from the 4x4 covariance of (p(0), p(t), p'(0), p'(t)) by linear algebra."""
    k = lambda s, o=0: float(kernel(s, o))
    C = np.array([
        [1.0, k(t), 0.0, k(t, 1)],
        [k(t), 1.0, -k(t, 1), 0.0],
        [0.0, -k(t, 1), -k(0, 2), -k(t, 2)],
        [k(t, 1), 0.0, -k(t, 2), -k(0, 2)],
    ])
    A, B, D = C[:2, :2], C[:2, 2:], C[2:, 2:]
    S = D - B.T @ np.linalg.solve(A, B)
    s1, s2 = math.sqrt(S[0, 0]), math.sqrt(S[1, 1])
    r = max(-1.0, min(1.0, S[0, 1] / (s1 * s2)))
    e = 2 * s1 * s2 / math.pi * (math.sqrt(1 - r * r) + r * math.asin(r))
    return e / (2 * math.pi * math.sqrt(np.linalg.det(A)))


@pytest.mark.parametrize("spec,u", [("lattice:25", 0.2), ("uniform:64", 0.3),
                                    ("lattice:65", 1.0)])
def test_k2_matches_linear_algebra(spec, u):
    c = ctx(spec, u)
    for t in (0.05, 0.13, 0.31, 0.77):
        assert kr.k2_two_point(c, t) == pytest.approx(k2_reference(c.kernel, t), rel=1e-6)


def test_k2_small_t_series():
    c = ctx("lattice:25", 0.2)
    t = 2 * c.series_cutoff
    assert kr.k2_two_point(c, t) == pytest.approx(kr.k2_series(c, t), rel=1e-3)
    with pytest.raises(SingularAtZero):
        kr.k2_two_point(c, 0.0)
    assert kr.k2(c, 0.0) == 0.0


@pytest.mark.parametrize("L", [0.5, 1.0, 3.0, 6.0])
def test_cilleruelo_numeric_matches_exact(L):
    c = kr.KacRiceContext.from_measure(cilleruelo_measure(), 0.0, ANGULAR)
    val = kr.second_factorial_moment_numeric(c, L)
    assert val == pytest.approx(exact_second_factorial(0.0, L), rel=1e-6, abs=1e-10)


def test_degenerate_covariance_detected():
    c = kr.KacRiceContext.from_measure(cilleruelo_measure(), 0.0, ANGULAR)
    with pytest.raises(DegenerateCovariance):
        kr.second_factorial_moment_numeric(c, 7.0)
    assert not c.is_nondegenerate(7.0)
    assert c.is_nondegenerate(6.0)


def test_expected_count():
    c = ctx("lattice:25", 0.4)
    assert kr.expected_zero_count(c, 3.0) == pytest.approx(math.sqrt(2) * 3.0)
    with pytest.raises(ValidationError):
        kr.expected_zero_count(c, -1.0)


@pytest.mark.parametrize("spec,u", [("lattice:1", 0.0), ("lattice:2", math.pi / 4),
                                    ("uniform:64", 0.3)])
def test_asymptotic_order(spec, u):
    c = ctx(spec, u)
    nu4 = lattice_nu4(int(spec.split(":")[1])) if spec.startswith("lattice") else 0.0
    inp = kr.AsymptoticInputs(nu4, u)
    Ls = np.array([0.2, 0.1, 0.05, 0.025])
    err = [abs(kr.second_factorial_moment_numeric(c, L)
               - kr.second_factorial_moment_asymptotic(inp, L)) for L in Ls]
    order = np.polyfit(np.log(Ls), np.log(err), 1)[0]
    assert order >= 1.8


def test_asymptotic_inputs():
    inp = kr.AsymptoticInputs(1.0, math.pi / 4)
    assert inp.is_degenerate
    assert kr.second_factorial_moment_asymptotic(inp, 0.1) == kr.degenerate_asymptotic(0.1)
    with pytest.raises(NotDegenerate):
        kr.degenerate_asymptotic(0.1, kr.AsymptoticInputs(0.5, 0.0))
    with pytest.raises(ValidationError):
        kr.AsymptoticInputs(1.5, 0.0)
    assert kr.leading_coefficient(kr.AsymptoticInputs(0.0, 0.0)) == pytest.approx(
        math.sqrt(2) * math.pi ** 2 / 24)


def test_single_frequency_has_no_pairs():
    # the degenerate case: one |frequency| means a pure sinusoid
    c = ctx("lattice:1", math.pi / 4)
    assert kr.second_factorial_moment_numeric(c, 0.05) < 1e-20


@pytest.mark.parametrize("m,u", [(5, 0.3), (25, 1.1), (1105, 0.0)])
def test_taylor_kernel(m, u):
    a = kr.taylor_kernel(m, u, 6)
    k = covariance_kernel(resolve_measure(f"lattice:{m}"), u)
    for t in (1e-3, 5e-3, 1e-2):
        approx = np.polyval(a[::-1], t)
        assert abs(approx - k(t)) <= (2 * math.pi * t) ** 8 / 40320 + 1e-15
    with pytest.raises(UnsupportedOrder):
        kr.taylor_kernel(m, u, 3)


def test_parity_formula():
    assert kr.parity_even_probability(1.0, 1.0) == 1.0
    assert kr.parity_even_probability(0.0, 1.0) == 0.5
    k = covariance_kernel(cilleruelo_measure(), 0.0, ANGULAR)
    assert kr.parity_even_probability(k, math.pi) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        kr.parity_even_probability(1.5, 1.0)
