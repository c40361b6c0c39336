import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augdens.diagnostics import anisotropy_from_B
from augdens.inversion import (
    EDDINGTON_NORM,
    RecoveredDF,
    anisotropy_from_moments,
    constant_beta_invert,
    eddington_df,
    eddington_invert,
    forward_moment,
    roundtrip_residual,
)
from augdens.models import (
    AugmentedDensityModel,
    EvaluationGrid,
    SeparablePart,
    constant_part,
    make_plummer_pair,
    power_df,
    power_df_density,
    power_part,
)
from augdens.quadrature import central_difference

SQ2 = math.sqrt(2.0)
PLUMMER_F = 24 * SQ2 / (7 * math.pi**3)  # f = PLUMMER_F * E^(7/2) for the unit Plummer sphere


def test_plummer_inversion(plummer):
    model, _ = plummer
    rec = eddington_invert(model.separable_parts[0])
    np.testing.assert_allclose(rec.f_values, PLUMMER_F * rec.e_nodes**3.5, rtol=1e-8)
    assert rec.log_slope() == pytest.approx(3.5, abs=0.01)
    assert rec.negative_mass_fraction == 0.0
    assert rec.e_nodes.size == 128 and rec.e_nodes[-1] == 1.0


def test_nonmonotone_inversion_goes_negative():
    A = SeparablePart(lambda x: x * (1 - x), lambda x: 1 - 2 * x, "quadratic")
    rec = eddington_invert(A)
    assert np.any(rec.f_values < 0)
    assert 0 < rec.negative_mass_fraction <= 1
    # f = (1/(sqrt8 pi^2)) (1/sqrt(E) - 4 sqrt(E)) changes sign at E = 1/4
    E = np.array([0.1, 0.5])
    np.testing.assert_allclose(eddington_df(A, E), EDDINGTON_NORM * (1 / np.sqrt(E) - 4 * np.sqrt(E)), rtol=1e-8)


def test_zero_density_inverts_to_zero():
    rec = eddington_invert(SeparablePart(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)))
    assert np.all(rec.f_values == 0) and rec.negative_mass_fraction == 0.0


def test_requires_escapable():
    with pytest.raises(ValueError):
        eddington_invert(constant_part(1.0))


def test_extension_point():
    with pytest.raises(NotImplementedError):
        constant_beta_invert(None)


@given(alpha=st.floats(-3, 3), k1=st.floats(1.5, 6), k2=st.floats(1.5, 6))
def test_linearity(alpha, k1, k2):
    A1, A2 = power_part(k1), power_part(k2, 0.7)
    combo = SeparablePart(lambda x: alpha * A1(x) + A2(x), lambda x: alpha * A1.deriv(x) + A2.deriv(x))
    E = np.linspace(0.05, 1, 7)
    lhs = eddington_df(combo, E)
    f1, f2 = eddington_df(A1, E), eddington_df(A2, E)
    # a sum of two different endpoint powers is only matched by one Jacobi weight, so
    # linearity holds to the quadrature tolerance (1e-8) of the combined magnitude
    scale = np.abs(alpha * f1) + np.abs(f2)
    assert np.all(np.abs(lhs - (alpha * f1 + f2)) <= 1e-8 * scale)


def test_serialisation(plummer):
    rec = eddington_invert(plummer[0].separable_parts[0], e_nodes=[0.25, 0.5, 1.0])
    text = rec.to_csv()
    assert text.startswith("# negative_mass_fraction=0.0\nE,f\n0.25,")
    d = rec.to_dict()
    assert d["negative_mass_fraction"] == 0.0 and d["e_nodes"] == [0.25, 0.5, 1.0]


def test_interpolated_evaluator(plummer):
    rec = eddington_invert(plummer[0].separable_parts[0])
    f = rec.as_distribution_function(exact=False)
    assert f.isotropic
    assert float(f(0.5, 0.0)) == pytest.approx(PLUMMER_F * 0.5**3.5, rel=1e-5)
    assert float(f(-0.1, 0.0)) == 0.0


# forward moments -------------------------------------------------------------


def test_forward_examples():
    c, psi, r2 = 1.5, 0.7, 2.0
    f = power_df(0, 0, c)
    p00 = 8 * SQ2 * math.pi / 3 * c * psi**1.5
    assert forward_moment(f, 0, 0, psi, r2) == pytest.approx(p00, rel=1e-12)
    assert forward_moment(f, 1, 0, psi, r2) == pytest.approx(p00 * 0.4 * psi, rel=1e-12)
    assert forward_moment(f, 0, 0, 0.0, r2) == 0.0


@pytest.mark.parametrize("ab", [(0.0, 0.0), (2.0, 0.0), (1.0, 1.0), (0.5, -0.25)])
def test_forward_matches_closed_form(ab):
    f, m = power_df(*ab), power_df_density(*ab)
    for psi, r2 in [(0.2, 0.01), (1.0, 3.0), (0.6, 800.0)]:
        assert forward_moment(f, 0, 0, psi, r2) == pytest.approx(float(m(psi, r2)), rel=1e-10)


@pytest.mark.parametrize("ab", [(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)])
def test_moment_relations(ab):
    f = power_df(*ab)
    psi, r2 = 0.6, 1.4
    p10 = lambda p, x: forward_moment(f, 1, 0, p, x)  # noqa: E731
    dp10 = central_difference(lambda p: np.vectorize(lambda q: p10(q, r2))(p), np.array(psi))
    assert float(dp10) == pytest.approx(forward_moment(f, 0, 0, psi, r2), rel=1e-5)
    d = central_difference(lambda x: np.vectorize(lambda y: y * p10(psi, y))(x), np.array(r2))
    assert float(d) == pytest.approx(forward_moment(f, 0, 1, psi, r2) / 2, rel=1e-5)


def test_roundtrip(plummer):
    grid = EvaluationGrid(np.linspace(0.1, 1.0, 4), np.geomspace(1e-2, 1e2, 3))
    assert roundtrip_residual(plummer[0], grid) <= 1e-6
    cubic = AugmentedDensityModel.from_parts(power_part(3), constant_part(), "cubic")
    assert roundtrip_residual(cubic, grid) <= 1e-6
    zero = AugmentedDensityModel.from_parts(
        SeparablePart(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)), constant_part(), "zero")
    assert roundtrip_residual(zero, grid) == 0.0


@pytest.mark.parametrize("coeffs", [[1.0], [0, 1.0], [0.5, 0.0, 2.0], [1, 1, 1, 1, 1, 1]])
def test_roundtrip_monotone_polynomials(coeffs):
    # A = sum_k c_k psi^(k+1), k up to 5 (degree up to 6)
    def A(x):
        return sum(c * x ** (k + 1) for k, c in enumerate(coeffs))

    def dA(x):
        return sum(c * (k + 1) * x**k for k, c in enumerate(coeffs))

    model = AugmentedDensityModel.from_parts(SeparablePart(A, dA), constant_part(), "poly")
    grid = EvaluationGrid(np.array([0.2, 0.6, 1.0]), np.array([1.0]))
    assert roundtrip_residual(model, grid) <= 1e-6


def test_roundtrip_rejects_anisotropic():
    m = AugmentedDensityModel.from_parts(power_part(3), power_part(-0.25), "aniso")
    with pytest.raises(ValueError):
        roundtrip_residual(m, EvaluationGrid([0.5], [1.0, 2.0]))


# anisotropy ----------------------------------------------------------------


@pytest.mark.parametrize("f, beta", [(power_df(2.0, 0.0), 0.0), (power_df(0.0, 1.0, 3.0), -1.0),
                                     (power_df(0.0, 0.0, 2.0), 0.0)])
def test_anisotropy_from_moments(plummer, f, beta):
    prof = anisotropy_from_moments(f, plummer[1], [0.1, 1.0, 10.0])
    np.testing.assert_allclose(prof.beta_values, beta, atol=1e-6)


def test_anisotropy_moments_vs_B(plummer):
    f = power_df(1.0, 1.0)
    r = np.array([0.05, 0.5, 5.0])
    from_B = anisotropy_from_B(power_df_density(1.0, 1.0).separable_parts[1], r)
    from_f = anisotropy_from_moments(f, plummer[1], r)
    np.testing.assert_allclose(from_f.beta_values, from_B.beta_values, atol=1e-6)
