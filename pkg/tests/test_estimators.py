import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import epanechnikov_pdf, gaussian_pdf, normal_equations_fit
from vslocreg.estimators import (
    CCError,
    RegressionSample,
    SingularWindow,
    cc_estimate,
    cc_many,
    fit_sums,
    local_linear_fit,
    local_linear_many,
    sk_estimate,
)
from vslocreg.kernels import parse_kernel
from vslocreg.vtheory import interval_l

GAUSS = parse_kernel("gaussian")
EPAN = parse_kernel("epanechnikov")


@pytest.fixture(scope="module")
def sample():
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, 400)
    return RegressionSample(x, np.sin(6 * x) + rng.normal(0, 0.3, x.size))


@pytest.mark.parametrize("kernel,pdf", [(GAUSS, gaussian_pdf), (EPAN, epanechnikov_pdf)])
def test_local_linear_matches_normal_equations(sample, kernel, pdf):
    for x0, h in [(0.3, 0.05), (0.0, 0.1), (0.97, 0.2)]:
        ref = normal_equations_fit(sample.x, sample.y, x0, h, pdf)
        np.testing.assert_allclose(local_linear_fit(sample, x0, h, kernel), ref, rtol=1e-9, atol=1e-9)


def test_sums_definition(sample):
    s = fit_sums(sample, 0.4, 0.07, GAUSS)
    d = sample.x - 0.4
    w = gaussian_pdf(d / 0.07)
    assert s.s2 == pytest.approx(np.sum(w * d * d), rel=1e-12)
    assert s.r1 == pytest.approx(np.sum(w * d * sample.y), rel=1e-12)


def test_cc_single_point_definition(sample):
    lam, h, x = 0.158, 0.06, 0.45
    off = interval_l(GAUSS, lam) * h
    parts = [sk_estimate(sample, x, c, h, GAUSS) for c in (x - off, x, x + off)]
    expected = (lam * parts[0] + parts[1] + lam * parts[2]) / (1 + 2 * lam)
    assert cc_estimate(sample, x, h, lam, GAUSS) == pytest.approx(expected, rel=1e-14)


def test_batched_matches_single_point(sample):
    xs = np.linspace(0.02, 0.98, 60)
    h = 0.05 + 0.03 * xs
    lam = 0.04 + 0.2 * xs
    res = cc_many(sample, xs, h, lam, GAUSS)
    ref = [cc_estimate(sample, a, b, c, GAUSS) for a, b, c in zip(xs, h, lam)]
    np.testing.assert_allclose(res.estimate, ref, rtol=1e-11, atol=1e-12)
    assert res.failures == 0


def test_batched_local_linear_chunking_invariant(sample):
    c = np.linspace(0, 1, 301)
    a = local_linear_many(sample, c, 0.04, EPAN, chunk=7)
    b = local_linear_many(sample, c, 0.04, EPAN, chunk=512)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-11)
    np.testing.assert_array_equal(a[2], b[2])


def test_singular_window_raises():
    data = RegressionSample([0.1, 0.2, 0.9], [1.0, 2.0, 3.0])
    with pytest.raises(SingularWindow):
        local_linear_fit(data, 0.5, 0.05, EPAN)
    with pytest.raises(CCError) as info:
        cc_estimate(data, 0.15, 0.2, 0.05, EPAN)
    assert info.value.side in ("left", "centre", "right")


def test_batched_failures_reported():
    data = RegressionSample([0.1, 0.2, 0.9], [1.0, 2.0, 3.0])
    res = cc_many(data, [0.15, 0.5], 0.2, 0.05, EPAN)
    assert res.failures >= 1 and np.isnan(res.estimate[~res.ok]).all()


def test_sample_validation():
    with pytest.raises(ValueError):
        RegressionSample([1, 2], [1])
    with pytest.raises(ValueError):
        RegressionSample([1, np.nan], [1, 2])
    with pytest.raises(ValueError):
        cc_estimate(RegressionSample([0, 1, 2], [0, 1, 2]), 1.0, 0.5, 0.0, GAUSS)
    with pytest.raises(ValueError):
        local_linear_fit(RegressionSample([0, 1, 2], [0, 1, 2]), 1.0, -0.5, GAUSS)


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(-10, 10), b=st.floats(-10, 10),
    h=st.floats(0.05, 0.5), lam=st.floats(0.01, 3.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_affine_data_reproduced_exactly(a, b, h, lam, seed):
    x = np.random.default_rng(seed).uniform(0, 1, 80)
    data = RegressionSample(x, a + b * x)
    grid = np.linspace(0.1, 0.9, 9)
    res = cc_many(data, grid, h, lam, GAUSS)
    np.testing.assert_allclose(res.estimate, a + b * grid, atol=1e-8 * (1 + abs(a) + abs(b)))
