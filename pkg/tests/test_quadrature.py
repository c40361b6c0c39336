import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import beta as B

from augdens.models import DistributionFunction, power_df
from augdens.quadrature import (
    DEFAULT_SPEC,
    DivergentIntegral,
    QuadratureError,
    QuadratureSpec,
    abel_integral,
    abel_integral_inner_singular,
    beta_half,
    central_difference,
    diagonal_line_integral,
    leading_exponent,
    refinement_delta,
    triangle_integral,
)

from conftest import ORACLES, rel


def test_quadrature_settings_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(node_count=4)
    with pytest.raises(ValueError):
        QuadratureSpec(relative_tolerance=0.0)
    assert QuadratureSpec(node_count=32).doubled().node_count == 64


@pytest.mark.parametrize(
    "g, X, expected",
    [
        (lambda t: np.ones_like(t), math.pi**2 / 4, math.pi),
        (lambda t: t, 1.0, 4.0 / 3.0),
        (lambda t: t**1.5, 1.0, 3 * math.pi / 8),
    ],
)
def test_abel_examples(g, X, expected):
    assert abel_integral(g, X) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize(
    "g, X, expected",
    [
        (lambda t: np.ones_like(t), 0.37, math.pi),
        (lambda t: np.sqrt(t), 1.0, 2.0),
        (lambda t: t ** -0.25, 2.0, 2.0 ** -0.25 * B(0.25, 0.5)),
    ],
)
def test_inner_singular_examples(g, X, expected):
    assert abel_integral_inner_singular(g, X) == pytest.approx(expected, rel=1e-12)


def test_inner_singular_divergence():
    with pytest.raises(DivergentIntegral) as info:
        abel_integral_inner_singular(lambda t: t**-0.5, 3.0)
    assert info.value.exponent == pytest.approx(-0.5, abs=1e-9)


def test_nonfinite_sample_reports_node():
    def g(t):
        out = np.ones_like(t)
        out[t > 0.5] = np.nan
        return out

    with pytest.raises(QuadratureError) as info:
        abel_integral(g, 1.0)
    assert info.value.node > 0.5


def test_vectorised_upper_limit():
    X = np.array([0.1, 1.0, 4.0])
    np.testing.assert_allclose(abel_integral(lambda t: t, X), 4.0 / 3.0 * X**1.5, rtol=1e-13)


@given(
    coeffs=st.lists(st.floats(-3, 3), min_size=1, max_size=7),
    X=st.floats(0.01, 50.0),
)
def test_polynomial_exact_at_minimal_nodes(coeffs, X):
    d = len(coeffs) - 1
    spec = QuadratureSpec(node_count=2 * d + 8)
    got = abel_integral(lambda t: np.polyval(coeffs, t), X, spec=spec)
    # int_0^X t^k / sqrt(X - t) dt = X^(k + 1/2) B(k+1, 1/2)
    terms = [c * X ** (k + 0.5) * B(k + 1, 0.5) for k, c in zip(range(d, -1, -1), coeffs)]
    scale = sum(abs(t) for t in terms)
    assert abs(got - sum(terms)) <= 1e-12 * max(scale, 1e-300)


@given(p=st.floats(-0.45, 3.0), X=st.floats(0.1, 10.0))
def test_power_law_matches_beta(p, X):
    got = abel_integral(lambda t: t**p, X)
    assert got == pytest.approx(X ** (p + 0.5) * B(p + 1, 0.5), rel=1e-10)


def test_leading_exponent():
    p, clean = leading_exponent(lambda t: 3 * t**-0.75, 2.0)
    assert clean and p == pytest.approx(-0.75, abs=1e-9)


def test_beta_half_table():
    np.testing.assert_allclose([beta_half(n) for n in range(3)], [math.pi, math.pi / 2, 3 * math.pi / 8], rtol=1e-12)


# triangle integrals ---------------------------------------------------------


@pytest.mark.parametrize("order", ["E", "L2"])
def test_triangle_closed_forms(order):
    c = 1.7
    f = power_df(0, 0, c)
    psi, r2 = 0.6, 2.5
    # closed forms of the double integrals of K^(-1/2) and K^(1/2) over the triangle
    assert triangle_integral(f, psi, r2, 0, 0, order=order) == pytest.approx(
        c * 4 * math.sqrt(2) / 3 * r2 * psi**1.5, rel=1e-12)
    assert triangle_integral(f, psi, r2, 1, 0, order=order) == pytest.approx(
        c * 8 * math.sqrt(2) / 15 * r2 * psi**2.5, rel=1e-12)


def test_triangle_against_dblquad():
    f = power_df(1.0, 1.0)
    psi, r2 = 0.8, 0.5

    def integrand(L2, E):
        return (2 * (psi - E) - L2 / r2) ** 0.5 * L2 * E * L2

    ref, _ = integrate.dblquad(integrand, 0, psi, 0, lambda E: 2 * r2 * (psi - E), epsabs=0, epsrel=1e-11)
    assert triangle_integral(f, psi, r2, 1, 1) == pytest.approx(ref, rel=1e-8)


def test_triangle_shrinks_to_zero():
    f = power_df(0, 0)
    assert triangle_integral(f, 1e-12, 1.0, 0, 0) < 1e-15


@pytest.mark.parametrize("name", sorted(ORACLES))
@pytest.mark.parametrize("n, m", [(0, 0), (1, 0), (0, 1), (2, 1)])
def test_triangle_order_interchange(name, n, m):
    f = power_df(*ORACLES[name])
    for psi, r2 in [(0.3, 0.01), (1.0, 1.0), (0.7, 300.0)]:
        a = triangle_integral(f, psi, r2, n, m, order="E")
        b = triangle_integral(f, psi, r2, n, m, order="L2")
        assert a == pytest.approx(b, rel=1e-8)


# diagonal lines -----------------------------------------------------------


@pytest.mark.parametrize("variable", ["E", "L2"])
def test_line_integral_examples(variable):
    f = power_df(0, 0)
    psi, r2 = 0.7, 3.0
    X = 2 * r2 * psi
    assert diagonal_line_integral(f, psi, r2, 0, variable=variable) == pytest.approx(X, rel=1e-13)
    assert diagonal_line_integral(f, psi, r2, 1, variable=variable) == pytest.approx(X**2 / 2, rel=1e-13)
    assert diagonal_line_integral(f, psi, r2, -0.5, variable=variable) == pytest.approx(2 * math.sqrt(X), rel=1e-13)


@given(psi=st.floats(0.01, 1.0), r2=st.floats(1e-3, 1e3), m=st.sampled_from([-0.5, 0.0, 0.5, 1.0]),
       name=st.sampled_from(sorted(ORACLES)))
def test_line_parametrisations_agree(psi, r2, m, name):
    f = power_df(*ORACLES[name])
    a = diagonal_line_integral(f, psi, r2, m, variable="E")
    b = diagonal_line_integral(f, psi, r2, m, variable="L2")
    assert a == pytest.approx(b, rel=1e-8)


def test_line_integral_divergent_for_radial_df():
    f = power_df(0.0, -0.5)
    with pytest.raises(DivergentIntegral):
        diagonal_line_integral(f, 0.5, 1.0, -0.5)


def test_line_moment_restricted():
    with pytest.raises(ValueError):
        diagonal_line_integral(power_df(0, 0), 0.5, 1.0, 2.0)


def test_line_integral_against_quad():
    f = DistributionFunction(lambda E, L2: np.exp(-E) * np.cos(L2) ** 2, "smooth")
    psi, r2 = 0.9, 1.3
    ref, _ = integrate.quad(lambda L2: np.sqrt(L2) * f(psi - L2 / (2 * r2), L2), 0, 2 * r2 * psi,
                            epsabs=0, epsrel=1e-12)
    assert diagonal_line_integral(f, psi, r2, 0.5) == pytest.approx(ref, rel=1e-10)


# differences and refinement ----------------------------------------------


def test_central_difference():
    x = np.array([0.0, 1e-3, 0.5, 20.0])
    # truncation error ~ (1e-5 x)^2 / 6 relative for exp
    np.testing.assert_allclose(central_difference(np.exp, x), np.exp(x), rtol=1e-7)


@pytest.mark.parametrize("name", sorted(ORACLES))
def test_refinement(name):
    f = power_df(*ORACLES[name])
    spec = QuadratureSpec(node_count=256)
    for fn in (
        lambda s: triangle_integral(f, 0.4, 7.0, 1, 0, s),
        lambda s: diagonal_line_integral(f, 0.4, 7.0, -0.5, s),
    ):
        assert refinement_delta(fn, spec) < spec.relative_tolerance


@pytest.mark.parametrize("p", [-0.49, -0.3, 0.2, 0.7])
def test_abel_mixed_endpoint_powers(p):
    # g = t**p + 1: the Jacobi weight fits t**p, the constant is left for the doubling check
    X = 0.8
    expected = X ** (p + 0.5) * B(p + 1.0, 0.5) + 2.0 * math.sqrt(X)
    got = abel_integral(lambda t: t**p + 1.0, X)
    assert got == pytest.approx(expected, rel=DEFAULT_SPEC.relative_tolerance)
