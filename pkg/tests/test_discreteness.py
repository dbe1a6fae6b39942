import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp, mpf, quad

from ssrkit.discreteness import (
    first_order,
    max_relative_error,
    ratio_general,
    ratio_power_law,
    report_power_law,
)
from ssrkit.errors import DomainError
from ssrkit.model import Kernel, ModelParams


def mp_ratio(gamma, eps):
    # tau = 1; inner integral in closed form, outer one by mp quadrature
    mp.dps = 30
    g, e = mpf(gamma), mpf(eps)
    num = quad(lambda s: (1 - s) ** (1 - g) / (1 - g), [0, e])
    den = quad(lambda s: 1 - s, [0, e])
    return float(num / den * (1 - g))


@pytest.mark.parametrize("gamma,eps", [(0.0, 0.3), (0.4, 0.05), (0.8, 0.5), (0.95, 0.9)])
def test_closed_form_against_mp_double_integral(gamma, eps):
    assert ratio_power_law(gamma, eps) == pytest.approx(mp_ratio(gamma, eps), rel=1e-12)


@given(gamma=st.floats(0.0, 0.95), eps=st.floats(1e-3, 0.95), tau=st.floats(0.05, 5.0))
def test_nested_quadrature_matches_closed_form(gamma, eps, tau):
    assert ratio_general(gamma, eps * tau, tau) == pytest.approx(ratio_power_law(gamma, eps), rel=1e-9)


@given(gamma=st.floats(0.0, 0.999), eps=st.floats(1e-6, 0.999))
def test_bound_is_never_violated(gamma, eps):
    r = ratio_power_law(gamma, eps)
    assert 1.0 - 1e-15 <= r <= max_relative_error(eps) * (1 + 1e-15)


def test_first_order_slope():
    for gamma in (0.2, 0.5, 0.9):
        eps = 1e-6
        assert (ratio_power_law(gamma, eps) - 1) / eps == pytest.approx(gamma / 2, rel=1e-5)
        assert first_order(gamma, eps) == 1 + gamma * eps / 2


def test_flat_kernel_has_no_bias():
    assert ratio_power_law(0.0, 0.4) == pytest.approx(1.0, rel=1e-15)


def test_kernel_objects():
    # a power-law Kernel equals the pure exponent gamma = 1 - alpha
    p = ModelParams(alpha=0.6, nu=0.4, lam=0.0, rho=-0.5, v0=0.02)
    assert ratio_general(Kernel("power_law", p), 0.1, 1.0) == pytest.approx(ratio_power_law(0.4, 0.1), rel=1e-10)
    # a decaying kernel has a positive bias below the bound
    e = Kernel("exponential", ModelParams(alpha=1.0, nu=0.4, lam=3.0, rho=-0.5, v0=0.02))
    r = ratio_general(e, 0.1, 1.0)
    assert 1.0 < r < max_relative_error(0.1)
    ml = Kernel("mittag_leffler", ModelParams(alpha=0.7, nu=0.4, lam=1.0, rho=-0.5, v0=0.02))
    assert 1.0 < ratio_general(ml, 0.1, 1.0) < max_relative_error(0.1)


def test_time_dependent_expected_variance():
    # weighting by e(s) against an mp double integral
    gamma, delta, tau = 0.5, 0.3, 1.0
    ev = lambda s: 0.02 + 0.01 * s  # noqa: E731
    mp.dps = 30
    g = mpf(gamma)
    num = quad(lambda s: ev(s) * (tau - s) ** (1 - g) / (1 - g), [0, delta])
    den = quad(lambda s: ev(s) * (tau - s), [0, delta])
    want = float(num / den * tau / (tau ** (1 - g) / (1 - g)))
    assert ratio_general(gamma, delta, tau, ev) == pytest.approx(want, rel=1e-11)


def test_domain_errors():
    for bad in [(1.0, 0.1), (-0.1, 0.1), (0.5, 0.0), (0.5, 1.0)]:
        with pytest.raises(DomainError):
            ratio_power_law(*bad)
    with pytest.raises(DomainError):
        ratio_general(0.5, 1.0, 0.5)
    with pytest.raises(DomainError):
        max_relative_error(2.0)


def test_report():
    r = report_power_law(0.5, 0.05)
    assert r.ratio < r.bound
    assert math.isclose(r.first_order, 1.0125)
