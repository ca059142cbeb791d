import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeattack.numerics import ContractError
from spikeattack.surrogate import (SurrogateSpec, alpha_bound, atan_g, atan_sigma,
                                   certify_atan, certify_triangle, concavity_margin,
                                   triangle_g, triangle_unit, vanish_degree,
                                   vanish_degree_numeric, validate_surrogate,
                                   write_validation_csv)


def test_atan_examples():
    assert atan_g(0.0, 4.0) == 2.0
    assert math.isclose(atan_g(1.0, 2 / math.pi), 1 / (2 * math.pi), rel_tol=1e-12)
    with pytest.raises(ContractError):
        atan_g(0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_atan_even(x, alpha):
    assert atan_g(x, alpha) == atan_g(-x, alpha)


def test_sigma_is_antiderivative():
    x = np.linspace(-3, 3, 61)
    h = 1e-6
    num = (atan_sigma(x + h, 2.0) - atan_sigma(x - h, 2.0)) / (2 * h)
    np.testing.assert_allclose(num, atan_g(x, 2.0), rtol=1e-7)


def test_triangle_examples():
    assert triangle_g(0.0) == 2.0
    assert triangle_g(1.5) == 0.0
    x = np.linspace(-1, 1, 20001)
    assert abs(np.trapezoid(triangle_unit(x), x) - 1.0) <= 1e-6


def test_vanish_degree_examples():
    assert vanish_degree(1.0, 0.0) == 0.0
    assert math.isclose(vanish_degree(2 / math.pi, 1.0), 0.5, rel_tol=1e-12)
    assert abs(vanish_degree(1.0, 1e9) - 1.0) <= 1e-6
    with pytest.raises(ContractError):
        vanish_degree(1.0, -0.1)


def test_vanish_degree_numeric_examples():
    assert abs(vanish_degree_numeric(triangle_unit, 1.0) - 1.0) <= 1e-8
    assert abs(vanish_degree_numeric(triangle_unit, 0.5) - 0.75) <= 1e-8
    assert abs(vanish_degree_numeric(lambda t: atan_g(t, 1.0), 1.0) - vanish_degree(1.0, 1.0)) <= 1e-6
    with pytest.raises(ContractError):
        vanish_degree_numeric(triangle_unit, -1.0)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 8.0])
def test_closed_form_matches_quadrature(alpha):
    grid = np.linspace(0.0, 10.0 / alpha, 100)
    num = [vanish_degree_numeric(lambda t: atan_g(t, alpha), v) for v in grid]
    np.testing.assert_allclose(num, vanish_degree(alpha, grid), rtol=0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 100.0))
def test_vanish_degree_monotone_in_unit_interval(alpha):
    g = vanish_degree(alpha, np.linspace(0.0, 100.0, 500))
    assert np.all(np.diff(g) >= 0)
    assert np.all((g >= 0) & (g <= 1))


def test_alpha_bound_examples():
    a = alpha_bound(1.0, 0.5)
    assert math.isclose(a, 2 / math.pi, rel_tol=1e-12)
    assert math.isclose(vanish_degree(a, 1.0), 0.5, rel_tol=1e-12)
    assert math.isclose(alpha_bound(1.0, 0.9), (2 / math.pi) * math.tan(0.45 * math.pi),
                        rel_tol=1e-12)
    assert abs(alpha_bound(1.0, 0.9) - 4.019459) < 1e-6
    for bad in [(1.0, 0.0), (1.0, 1.0), (0.0, 0.5), (-1.0, 0.5)]:
        with pytest.raises(ContractError):
            alpha_bound(*bad)


def test_validate_surrogate_examples():
    tri = certify_triangle(tol=1e-6)
    assert tri.passed
    atan = validate_surrogate(lambda t: atan_g(t, 4.0), np.linspace(-12.5, 12.5, 1001),
                              "atan", 4.0, scale=0.5 * math.pi * 4.0, breakpoints=())
    assert atan.integral_err <= 1e-4
    with pytest.warns(Warning):
        odd = validate_surrogate(lambda t: t, np.linspace(-5, 5, 101))
    assert not odd.evenness_ok and not odd.integral_ok


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 100.0))
def test_atan_certifies_for_any_alpha(alpha):
    assert certify_atan(alpha).passed


def test_validation_csv(tmp_path):
    p = tmp_path / "v.csv"
    write_validation_csv([certify_atan(2.0), certify_triangle()], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "family,alpha,evenness_err,monotonicity_err,integral_err"
    assert lines[1].startswith("atan,2.0,") and lines[2].startswith("triangle,")


def test_concavity_examples():
    grid = np.linspace(0.0, 5.0, 501)
    assert concavity_margin(1.0, grid) <= 1e-9
    assert concavity_margin(10.0, grid) <= 1e-9
    h = grid[1] - grid[0]
    assert math.isclose(concavity_margin(1.0, grid, G=lambda x: x * x), 2 * h * h, rel_tol=1e-6)
    with pytest.raises(ContractError):
        concavity_margin(1.0, [0.0, 1.0])


def test_surrogate_spec():
    u = np.array([[-1.0, 0.0, 0.5]])
    np.testing.assert_array_equal(SurrogateSpec.atan(2.0).grad(0, u), atan_g(u, 2.0))
    np.testing.assert_array_equal(SurrogateSpec.triangle().grad(0, u), triangle_g(u))
    assert not SurrogateSpec.atan(1.0).adaptive
    with pytest.raises(ContractError):
        SurrogateSpec.atan(-1.0)
