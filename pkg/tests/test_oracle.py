import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fairrobust import oracle
from fairrobust.oracle import GridSpec, QuadratureConfig
from fairrobust.population import GaussianMixtureSpec

SPEC5 = GaussianMixtureSpec(-1.0, 1.0, 5.0)


def test_oracle_does_not_import_closed_forms():
    import ast
    import inspect

    tree = ast.parse(inspect.getsource(oracle))
    imported = {n.module for n in ast.walk(tree) if isinstance(n, ast.ImportFrom)}
    imported |= {a.name for n in ast.walk(tree) if isinstance(n, ast.Import) for a in n.names}
    assert not any("mixture_theory" in (m or "") for m in imported)


def test_integrate_gaussian_event_examples():
    assert oracle.integrate_gaussian_event(0, 1, -math.inf, 0) == pytest.approx(0.5, abs=1e-13)
    assert oracle.integrate_gaussian_event(0, 1, -1, 1) == pytest.approx(
        0.682689492137085897, abs=1e-13)
    assert oracle.integrate_gaussian_event(1, 5, -math.inf, -2 / 3) == pytest.approx(
        0.369441340181763638, abs=1e-13)


def test_integrate_gaussian_event_errors():
    with pytest.raises(ValueError):
        oracle.integrate_gaussian_event(0, 0, -1, 1)
    with pytest.raises(ValueError):
        oracle.integrate_gaussian_event(0, 1, 1, -1)


def test_config_guards():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=1e-15)
    with pytest.raises(ValueError):
        GridSpec(0, 1, 0)
    with pytest.raises(ValueError):
        GridSpec(1, 0, 0.1)
    with pytest.raises(ValueError):
        GridSpec(0, 1, 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 10), st.floats(-10, 10), st.floats(0, 10))
def test_quadrature_matches_cdf(mu, sigma, lo, width):
    hi = lo + width
    exact = special.ndtr((hi - mu) / sigma) - special.ndtr((lo - mu) / sigma)
    assert oracle.integrate_gaussian_event(mu, sigma, lo, hi) == pytest.approx(exact, abs=1e-13)


def test_quadrature_functionals_agree_with_curves():
    for t in (-0.5, 0.0, 0.7):
        assert oracle.quad_natural_error(SPEC5, t) == pytest.approx(
            float(oracle.curve_natural_error(SPEC5, t)), abs=1e-13)
        assert oracle.quad_robust_error(SPEC5, t, 0.1) == pytest.approx(
            float(oracle.curve_robust_error(SPEC5, t, 0.1)), abs=1e-13)
    assert oracle.quad_avg_distance(SPEC5, -2 / 3) == pytest.approx(2.525416685794431708, abs=1e-11)


def test_grid_minimize_examples():
    arg, _ = oracle.grid_minimize(lambda x: (x - 0.3) ** 2, GridSpec(-1, 1, 1e-4))
    assert 0.2999 <= arg <= 0.3001
    arg, _ = oracle.grid_minimize(lambda x: 1.0, GridSpec(-1, 1, 0.1))
    assert arg == -1
    arg, _ = oracle.grid_natural_threshold(SPEC5)
    assert arg == pytest.approx(0.7946, abs=1e-4)


def test_grid_minimize_rejects_nan_with_location():
    with pytest.raises(ValueError, match="0.5"):
        oracle.grid_minimize(lambda x: math.nan if x == 0.5 else x, GridSpec(0, 1, 0.5))


def test_grid_minimum_below_random_probes():
    grid = GridSpec(-1, 1, 1e-3)
    f = lambda t: oracle.curve_robust_error(SPEC5, t, 0.1)
    _, best = oracle.grid_minimize(f, grid, vectorized=True)
    pts = grid.points()
    rng = np.random.default_rng(3)
    for x in rng.choice(pts, 100):
        assert best <= float(f(x))


def test_bisect_root():
    assert oracle.bisect_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), abs=1e-12)
    with pytest.raises(ValueError):
        oracle.bisect_root(lambda x: x * x + 1, -1, 1)


def test_monte_carlo_zero_budget_matches_natural_error():
    est, se = oracle.monte_carlo_error(SPEC5, 0.0, 0.0, 200_000, seed=1)
    exact = 0.289697772246177014
    assert abs(est - exact) <= 4 * se


def test_monte_carlo_reproducible_and_clt_scaling():
    a = oracle.monte_carlo_error(SPEC5, 0.0, 0.1, 50_000, seed=4)
    b = oracle.monte_carlo_error(SPEC5, 0.0, 0.1, 50_000, seed=4)
    assert a == b
    c = oracle.monte_carlo_error(SPEC5, 0.0, 0.1, 100_000, seed=4)
    ratio = c[1] / a[1]
    assert abs(ratio - 1 / math.sqrt(2)) <= 0.2 / math.sqrt(2)
    with pytest.raises(ValueError):
        oracle.monte_carlo_error(SPEC5, 0.0, 0.1, 999, seed=0)


@pytest.mark.slow
def test_monte_carlo_robust_error_reference():
    est, se = oracle.monte_carlo_error(SPEC5, 0.0, 0.1, 10_000_000, seed=0)
    assert abs(est - 0.306318204722929382) <= 3 * se


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.3, 1.0, 2.0, 2.9, 3.9, 4.1, 6.0, -1.7])
def test_erf_series_against_mpmath(x):
    assert oracle.erf_series(x) == pytest.approx(float(mpmath.erf(x)), abs=2e-15)


def test_normal_cdf_series():
    assert oracle.normal_cdf_series(1.0) == pytest.approx(0.841344746068542949, abs=1e-15)
