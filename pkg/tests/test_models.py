import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augdens.models import (
    AugmentedDensityModel,
    EvaluationGrid,
    PotentialModel,
    SeparablePart,
    check_model,
    constant_part,
    default_grid,
    kernel_K,
    make_plummer_pair,
    make_powerlaw_separable,
    power_df,
    power_part,
)
from augdens.quadrature import central_difference


def test_kernel_examples():
    assert kernel_K(0.0, 0.0, 1.0, 1.0) == 2.0
    assert kernel_K(3.0, 0.0, 3.0, 2.0) == 0.0
    assert kernel_K(0.0, 2 * 4.0 * 1.0, 1.0, 4.0) == 0.0
    with pytest.raises(ValueError):
        kernel_K(0.0, 0.0, 1.0, 0.0)


@given(E=st.floats(0, 2), L2=st.floats(0, 5), psi=st.floats(0, 2), r2=st.floats(1e-2, 1e2),
       dE=st.floats(-1, 1), dL=st.floats(-1, 1))
def test_kernel_affine(E, L2, psi, r2, dE, dL):
    k0 = kernel_K(E, L2, psi, r2)
    assert kernel_K(E + dE, L2, psi, r2) - k0 == pytest.approx(-2 * dE, abs=1e-12)
    assert kernel_K(E, L2 + dL, psi, r2) - k0 == pytest.approx(-dL / r2, abs=1e-12)


def test_plummer_pair():
    model, pot = make_plummer_pair()
    assert pot(0.0) == 1.0
    assert model(1.0, 123.0) == pytest.approx(3 / (4 * math.pi), rel=1e-15)
    assert model(0.0, 5.0) == 0.0
    r = np.geomspace(1e-3, 1e3, 50)
    np.testing.assert_allclose(model(pot(r), r * r), 3 / (4 * math.pi) * (1 + r * r) ** -2.5, rtol=1e-12)
    assert pot.is_monotone(r)


def test_powerlaw_separable():
    A = power_part(3)
    iso = make_powerlaw_separable(0.0, A)
    np.testing.assert_array_equal(iso.separable_parts[1](np.array([0.1, 1, 10])), 1.0)
    m = make_powerlaw_separable(0.25, A)
    assert m(0.5, 16.0) == pytest.approx(A(0.5) / 2, rel=1e-15)
    tang = make_powerlaw_separable(-1.0, A)
    assert tang.separable_parts[1](7.0) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        make_powerlaw_separable(1.0, A)


@given(p1=st.floats(0.01, 1), p2=st.floats(0.01, 1), x1=st.floats(1e-3, 1e3), x2=st.floats(1e-3, 1e3),
       beta0=st.floats(-1, 0.9))
def test_rank_one_factorisation(p1, p2, x1, x2, beta0):
    m = make_powerlaw_separable(beta0, power_part(5, 0.3))
    lhs = m(p1, x1) * m(p2, x2)
    rhs = m(p1, x2) * m(p2, x1)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@given(x=st.floats(0.05, 20.0), k=st.floats(-2, 6))
def test_separable_derivative_matches_difference(x, k):
    part = power_part(k, 1.3)
    fd = central_difference(part.value, np.array(x))
    assert float(part.deriv(x)) == pytest.approx(float(fd), rel=1e-6, abs=1e-12)


def test_numeric_derivative_fallback():
    part = SeparablePart(np.sin)
    assert not part.analytic_derivative_flag
    assert float(part.deriv(0.3)) == pytest.approx(math.cos(0.3), rel=1e-8)


def test_model_without_analytic_partials():
    m = AugmentedDensityModel(lambda p, x: p**2 * np.exp(-x))
    assert float(m.dpsi(0.5, 1.0)) == pytest.approx(2 * 0.5 * math.exp(-1), rel=1e-8)
    assert float(m.dr2(0.5, 1.0)) == pytest.approx(-0.25 * math.exp(-1), rel=1e-8)


def test_scaled_model():
    m, _ = make_plummer_pair()
    assert m.scaled(2.5)(0.4, 3.0) == pytest.approx(2.5 * m(0.4, 3.0))


def test_grid_validation():
    g = EvaluationGrid([0.1, 0.5], [1.0, 2.0, 3.0])
    assert g.shape == (2, 3)
    assert list(g.points())[1] == (0.1, 2.0)
    with pytest.raises(ValueError):
        g.psi_nodes[0] = 3.0
    for bad in ([0.0, 1.0], [0.5, 0.5], [2.0, 1.0], []):
        with pytest.raises(ValueError):
            EvaluationGrid(bad, [1.0])


def test_default_grid():
    g = default_grid()
    assert g.shape == (64, 64)
    assert g.psi_nodes[-1] == 1.0 and g.psi_nodes[0] == 1 / 64
    assert g.r2_nodes[0] == pytest.approx(1e-3) and g.r2_nodes[-1] == pytest.approx(1e3)


def test_check_model(small_grid):
    m, _ = make_plummer_pair()
    assert check_model(m, small_grid) == {"escapable": True, "issues": []}
    bad = AugmentedDensityModel.from_parts(SeparablePart(lambda x: x - 0.5), constant_part(), "neg")
    out = check_model(bad, small_grid)
    assert not out["escapable"]
    assert any("negative" in s for s in out["issues"])


def test_power_df_isotropic_flag():
    assert power_df(2, 0).isotropic
    assert not power_df(2, 1).isotropic
    f = power_df(1, 0)
    np.testing.assert_array_equal(f(np.array([-1.0, 0.5]), 0.0), [0.0, 0.5])


def test_potential_monotone_check():
    assert not PotentialModel(lambda r: np.sin(r)).is_monotone(np.linspace(0.1, 5, 20))
