import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_scan_root, gaussian_v
from vslocreg.kernels import parse_kernel
from vslocreg.vtheory import (
    InfeasibleError,
    feasibility,
    interval_l,
    solve_lambda_for_v,
    v_extrema,
    v_of_lambda,
    v_sup_limit,
    zeta_var,
)


def test_interval_l_uniform_arithmetic():
    # sqrt((1 + 1/(2*0.0454)) / 3)
    assert interval_l(parse_kernel("uniform"), 0.0454) == pytest.approx(2.0011, abs=1e-4)


def test_interval_l_decreases_to_sqrt_kappa2():
    g = parse_kernel("gaussian")
    lam = np.geomspace(1e-3, 1e4, 50)
    l = interval_l(g, lam)
    assert np.all(np.diff(l) < 0)
    assert l[-1] == pytest.approx(1.0, rel=1e-4)


def test_gaussian_v_matches_textbook_identities():
    lam = np.geomspace(1e-3, 20, 40)
    np.testing.assert_allclose(v_of_lambda(parse_kernel("gaussian"), lam), gaussian_v(lam), rtol=1e-12)


def test_v_limits():
    for kid in ("gaussian", "beta:1", "tricube", "vs:0:6.0131"):
        k = parse_kernel(kid)
        from vslocreg.kernels import moments

        r = moments(k).roughness
        assert v_of_lambda(k, 1e-9) == pytest.approx(r, rel=1e-6)
        assert v_of_lambda(k, 1e7) == pytest.approx(v_sup_limit(k), rel=1e-5)


def test_vs_kernel_curve():
    c = v_extrema(parse_kernel("vs:0:6.0131"))
    assert c.v_min == pytest.approx(1.25043, abs=1e-5)
    assert c.lambda_min == pytest.approx(0.53133, abs=1e-4)
    assert c.v_sup == pytest.approx(3.23178, abs=1e-5)
    assert 2.58 <= c.ratio <= 2.60
    assert not c.left_monotone


def test_gaussian_curve_shape():
    c = v_extrema(parse_kernel("gaussian"))
    assert c.left_monotone
    assert c.lambda_min == pytest.approx(0.0376, abs=5e-4)
    assert c.v_at_zero_limit == pytest.approx(1 / (2 * math.sqrt(math.pi)))


def test_feasibility_verdicts():
    c = v_extrema(parse_kernel("gaussian"))
    ok = feasibility(c, 3.26296, 2.39963)
    assert ok.feasible
    lo, hi = ok.zeta_range
    assert lo == pytest.approx(c.v_min * 3.26296) and hi == pytest.approx(c.v_sup * 2.39963)
    bad = feasibility(c, 0.59821, 0.04799)
    assert not bad.feasible and bad.zeta_range is None
    with pytest.raises(InfeasibleError):
        zeta_var(c, 0.59821, 0.04799)
    with pytest.raises(ValueError):
        feasibility(c, 1.0, 2.0)


@pytest.mark.parametrize("kid", ["gaussian", "beta:1", "beta:3", "triangle", "vs:0:6.0131"])
@pytest.mark.parametrize("frac", [0.05, 0.3, 0.6, 0.9])
def test_root_is_largest_and_matches_dense_scan(kid, frac):
    c = v_extrema(parse_kernel(kid))
    target = c.v_min + frac * c.v_range
    lam = solve_lambda_for_v(c, target)
    assert c(lam) == pytest.approx(target, rel=1e-8)
    ref = dense_scan_root(lambda t: v_of_lambda(c.kernel, t), target, c.lambda_min, min(60.0, c.lambda_cap))
    assert lam == pytest.approx(ref, rel=1e-6)


def test_solver_edges():
    c = v_extrema(parse_kernel("gaussian"))
    assert solve_lambda_for_v(c, c.v_min) == c.lambda_min
    assert solve_lambda_for_v(c, c.v_sup) == c.lambda_cap
    with pytest.raises(ValueError):
        solve_lambda_for_v(c, c.v_min * 0.9)
    with pytest.raises(ValueError):
        solve_lambda_for_v(c, c.v_sup * 1.1)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-5, max_value=1e3))
def test_v_never_below_minimum(lam):
    c = v_extrema(parse_kernel("gaussian"))
    assert c(lam) >= c.v_min - 1e-12
    assert c(lam) <= c.v_sup + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_vs_kappa2_monotone_in_a0(u):
    # within the vs family at fixed a1, a larger mass at the edge raises kappa2
    from vslocreg.kernels import KernelSpec, moments

    a1 = 3.0
    top = (1 + a1) / (2 * a1)
    a, b = u * top * 0.99, min(u * top * 0.99 + 0.01, top)
    ka = moments(KernelSpec("vskernel", (a, a1))).kappa2
    kb = moments(KernelSpec("vskernel", (b, a1))).kappa2
    assert kb < ka
