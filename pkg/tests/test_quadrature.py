import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinned_string.analytic import (
    DomainError,
    ModelParams,
    pinned_variance_exact,
    truncated_variance_closed_form,
    white_noise_truncated_energy,
    white_noise_variance,
)
from pinned_string.quadrature import (
    KernelDifference,
    NotInHilbertSpace,
    radial_moment_coefficient_check,
    gaussian_riesz_bilinear,
    gaussian_riesz_bilinear_realspace,
    pinned_increment_variance,
    pinned_variance,
    q_form,
    truncated_variance_quadrature,
    variance_exponent,
    white_noise_truncated_quadrature,
)

WHITE = ModelParams(alpha=0.0, spatial_dim=1, white_noise=True)


def bilinear_closed(r, a, n):
    return 2 ** (-1.5 * a) * math.gamma((n - a) / 2) / math.gamma(n / 2) * r ** (-a / 2)


@pytest.mark.parametrize("a,n", [(0.5, 1), (1.0, 2), (1.5, 2), (0.3, 3)])
def test_bilinear_matches_gamma_form(a, n):
    res = gaussian_riesz_bilinear(1.0, a, n)
    assert res.value == pytest.approx(bilinear_closed(1.0, a, n), rel=1e-10)
    assert res.abs_error_estimate >= 0


def test_bilinear_value_alpha1_n2():
    # sqrt(pi/8): d/dt of the truncated variance at t = 1
    assert gaussian_riesz_bilinear(1.0, 1.0, 2).value == pytest.approx(0.626657, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0.1, 1.9))
def test_bilinear_scaling(c, a):
    lhs = gaussian_riesz_bilinear(c, a, 2).value
    rhs = c ** (-a / 2) * gaussian_riesz_bilinear(1.0, a, 2).value
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_bilinear_domain():
    with pytest.raises(DomainError):
        gaussian_riesz_bilinear(1.0, 1.0, 1)


def test_bilinear_realspace_oracle():
    real = gaussian_riesz_bilinear_realspace(1.0, 0.5)
    assert real.value == pytest.approx(gaussian_riesz_bilinear(1.0, 0.5, 1).value, abs=1e-4)


@pytest.mark.parametrize("a,n", [(0.5, 1), (1.0, 2), (1.5, 2)])
def test_truncated_integral(a, n):
    q = truncated_variance_quadrature(1.0, a, n)
    assert q.value == pytest.approx(truncated_variance_closed_form(1.0, a, n), rel=1e-10)


def test_radial_coefficient_winner():
    for a, n in [(0.5, 1), (1.0, 2), (1.5, 2)]:
        chk = radial_moment_coefficient_check(a, n)
        assert chk.winner == "2^-alpha/2"
        assert chk.numeric == pytest.approx(chk.derived, rel=1e-10)


class TestPinnedVariance:
    def test_alpha1_n2(self, colored):
        assert pinned_variance(1.0, colored).value == pytest.approx(math.sqrt(math.pi), rel=1e-10)

    def test_white_noise(self):
        # the pinned white-noise variance at t = 1 is 1/sqrt(pi), sqrt(2) above the truncated energy
        v = pinned_variance(1.0, WHITE).value
        assert v == pytest.approx(1 / math.sqrt(math.pi), rel=1e-10)
        assert v / white_noise_truncated_quadrature(1.0).value == pytest.approx(math.sqrt(2), rel=1e-9)
        assert white_noise_truncated_quadrature(1.0).value == pytest.approx(white_noise_truncated_energy(1.0), rel=1e-9)

    @pytest.mark.parametrize("a,n", [(0.2, 1), (0.7, 1), (0.5, 2), (1.0, 2), (1.9, 2), (1.2, 3)])
    def test_closed_form(self, a, n):
        p = ModelParams(alpha=a, spatial_dim=n)
        assert pinned_variance(1.3, p).value == pytest.approx(pinned_variance_exact(1.3, p), rel=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 1.9), st.floats(1e-3, 1e3))
    def test_scaling(self, a, t):
        p = ModelParams(alpha=a, spatial_dim=2)
        assert pinned_variance(4 * t, p).value == pytest.approx(4 ** ((2 - a) / 2) * pinned_variance(t, p).value,
                                                               rel=1e-8)

    def test_white_scaling(self):
        assert pinned_variance(4.0, WHITE).value == pytest.approx(2 * pinned_variance(1.0, WHITE).value, rel=1e-8)

    @pytest.mark.parametrize("a", [0.4, 1.0, 1.6])
    def test_slope(self, a):
        p = ModelParams(alpha=a, spatial_dim=2)
        assert variance_exponent(p) == pytest.approx((2 - a) / 2, abs=1e-6)
        assert variance_exponent(WHITE) == pytest.approx(0.5, abs=1e-6)


class TestIncrementVariance:
    def test_zero(self, colored):
        assert pinned_increment_variance(0.7, 0.7, colored).value == 0.0

    def test_from_zero(self, colored):
        assert pinned_increment_variance(0.0, 1.0, colored).value == pytest.approx(
            pinned_variance(1.0, colored).value, rel=1e-9)

    def test_stationary_increments(self, colored):
        v = pinned_increment_variance(1.0, 3.0, colored).value
        assert v == pytest.approx(math.sqrt(2 * math.pi), rel=1e-9)

    def test_white_noise(self):
        assert pinned_increment_variance(1.0, 3.0, WHITE).value == pytest.approx(white_noise_variance(2.0), rel=1e-8)


class TestQForm:
    def test_matches_fourier_route(self):
        p = ModelParams(alpha=0.5, spatial_dim=1)
        g = KernelDifference(1.0, (0.0,))
        assert q_form(g, g, p).value == pytest.approx(pinned_variance(1.0, p).value, abs=1e-3)

    def test_plancherel_alpha1_n2(self, colored):
        g = KernelDifference(1.0, (0.0, 0.0))
        r = q_form(g, g, colored)
        tol = max(1e-3, 3 * r.abs_error_estimate)
        assert abs(r.value - math.sqrt(math.pi)) <= tol

    def test_white_noise(self):
        g = KernelDifference(1.0, (0.0,))
        assert q_form(g, g, WHITE).value == pytest.approx(1 / math.sqrt(math.pi), abs=1e-3)

    def test_outside_alpha_range_diverges(self):
        p = ModelParams.unchecked(alpha=1.5, spatial_dim=1)
        g = KernelDifference(1.0, (0.0,))
        with pytest.raises(NotInHilbertSpace):
            q_form(g, g, p)

    def test_bilinear(self):
        p = ModelParams(alpha=0.5, spatial_dim=1)
        f = KernelDifference(1.0, (0.0,))
        g1 = KernelDifference(0.5, (0.3,))
        g2 = KernelDifference(2.0, (0.0,))
        lhs = q_form(f, g1 + g2, p)
        rhs = q_form(f, g1, p) + q_form(f, g2, p)
        tol = max(1e-8, 3 * (lhs.abs_error_estimate + rhs.abs_error_estimate))
        assert abs(lhs.value - rhs.value) <= tol

    def test_increment_is_variogram(self, colored):
        f = KernelDifference(3.0, (0.0, 0.0)) - KernelDifference(1.0, (0.0, 0.0))
        assert q_form(f, f, colored).value == pytest.approx(math.sqrt(2 * math.pi), abs=1e-3)


def test_fast_enough():
    t0 = time.perf_counter()
    for a, n in [(0.5, 1), (1.0, 2), (1.5, 2)]:
        truncated_variance_quadrature(1.0, a, n)
        variance_exponent(ModelParams(alpha=a, spatial_dim=n))
    assert time.perf_counter() - t0 < 1.0
