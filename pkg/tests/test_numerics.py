import math

import numpy as np
import pytest

from vslocreg._numerics import (
    QuadratureError,
    adaptive_gauss_legendre,
    bisect_increasing,
    golden_section,
    integrate_grid,
)


def test_quadrature_polynomial_exact():
    assert adaptive_gauss_legendre(lambda t: t**5 - 3 * t**2, -1, 2) == pytest.approx(10.5 - 9, abs=1e-13)


def test_quadrature_kink_breakpoint():
    val = adaptive_gauss_legendre(np.abs, -1, 3, breakpoints=(0.0,))
    assert val == pytest.approx(5.0, abs=1e-14)


def test_quadrature_reversed_and_empty():
    assert adaptive_gauss_legendre(np.exp, 1, 0) == pytest.approx(-(math.e - 1), abs=1e-13)
    assert adaptive_gauss_legendre(np.exp, 2, 2) == 0.0


def test_quadrature_failure_carries_error():
    with pytest.raises(QuadratureError) as info:
        adaptive_gauss_legendre(lambda t: np.sin(1 / t), 1e-9, 1, tol=1e-14, max_panels=5)
    assert info.value.achieved >= 0


def test_golden_section_quadratic():
    x, fx = golden_section(lambda t: (t - 0.3) ** 2 + 1, -2, 2, rtol=1e-12)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx == pytest.approx(1.0, abs=1e-15)


def test_bisect_vectorised_log_split():
    targets = np.array([1e-3, 1.0, 1e3])
    roots = bisect_increasing(lambda v: v**3, targets, 1e-6, 1e6)
    np.testing.assert_allclose(roots, np.cbrt(targets), rtol=1e-14)


def test_integrate_grid_rules():
    y = np.ones(11)
    assert integrate_grid(y, 0.1, "riemann") == pytest.approx(1.1)
    assert integrate_grid(y, 0.1, "trapezoid") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        integrate_grid(y, 0.1, "simpson")
