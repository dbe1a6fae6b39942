import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssrkit.charfn import heston_exponents, heston_psi
from ssrkit.errors import DegenerateSkewError, DomainError, UnsupportedConfigurationError
from ssrkit.model import ForwardVarianceCurve, Kernel, ModelParams, curve_eval
from ssrkit.smile import implied_vol, lewis_call
from ssrkit.ssr import (
    TermStructure,
    atm_total_variance,
    bs_atm,
    maturity_grid,
    skew_from_cf,
    ssr_afv,
    ssr_general,
    ssr_heston,
    ssr_leading_order,
    ssr_leading_order_general,
    ssr_short_time_limit,
    term_structure_heston,
)

HESTON = ModelParams(alpha=1.0, nu=0.5, lam=1.5, rho=-0.7, vbar=0.03, v0=0.04)


def bs_psi(w):
    return lambda a: -0.5 * (a * a + 0.25) * w + 0j * a


@given(w=st.floats(1e-4, 2.0))
def test_bs_atm_matches_black_scholes(w):
    from ssrkit.smile import bs_price

    assert bs_atm(w) == pytest.approx(bs_price(0.0, w), rel=1e-13)


@settings(max_examples=15)
@given(w=st.floats(1e-4, 1.0))
def test_atm_variance_of_black_scholes_exponent(w):
    assert atm_total_variance(bs_psi(w)) == pytest.approx(w, rel=1e-10)


def test_black_scholes_has_no_skew():
    assert skew_from_cf(bs_psi(0.04), 1.0, 0.04) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DegenerateSkewError):
        ssr_general(bs_psi(0.04), lambda a: 0 * a + 0j, -0.5, 1.0)


def _fd_iv(psi, tau, h=1e-3):
    """Implied vols at k = -h, 0, h from Lewis prices (independent pricing route)."""
    prices = lewis_call(psi, np.array([-h, 0.0, h]))
    return [implied_vol(float(p), k, tau) for p, k in zip(prices, (-h, 0.0, h))]


@pytest.mark.parametrize("tau", [0.1, 1.0])
def test_heston_skew_and_atm_vol_against_smile_differences(tau):
    psi = lambda a: heston_psi(HESTON, tau, a - 0.5j)  # noqa: E731
    lo, mid, hi = _fd_iv(psi, tau)
    pt = ssr_heston(HESTON, tau)
    assert pt.sigma_atm == pytest.approx(mid, rel=1e-9)
    assert pt.skew == pytest.approx((hi - lo) / 2e-3, rel=1e-5)


def test_heston_beta_against_variance_bump():
    # beta = rho nu dsigma_atm/dV by an independent finite difference of implied vols
    tau, h = 0.5, 1e-5
    vols = []
    for v in (HESTON.v0 - h, HESTON.v0 + h):
        psi = lambda a, v=v: heston_psi(HESTON, tau, a - 0.5j, v0=v)  # noqa: E731
        vols.append(implied_vol(lewis_call(psi, 0.0), 0.0, tau))
    beta_fd = HESTON.rho * HESTON.nu * (vols[1] - vols[0]) / (2 * h)
    assert ssr_heston(HESTON, tau).beta == pytest.approx(beta_fd, rel=1e-5)


def test_general_route_equals_heston_route():
    tau = 0.7
    psi = lambda a: heston_exponents(HESTON, tau, a - 0.5j)[0]  # noqa: E731
    dxi = lambda a: heston_exponents(HESTON, tau, a - 0.5j)[1]  # noqa: E731
    a = ssr_general(psi, dxi, HESTON.rho, tau)
    b = ssr_heston(HESTON, tau)
    assert a.ssr == pytest.approx(b.ssr, rel=1e-12)
    assert a.beta == pytest.approx(a.ssr * a.skew, rel=1e-14)


def test_heston_route_needs_alpha_one():
    with pytest.raises(UnsupportedConfigurationError):
        ssr_heston(HESTON.with_(alpha=0.6), 0.5)


def test_zero_correlation_is_degenerate():
    p = ModelParams(alpha=0.6, nu=0.4, lam=0.0, rho=0.0, v0=0.02)
    with pytest.raises(DegenerateSkewError):
        ssr_afv(p, Kernel.for_params(p), ForwardVarianceCurve.flat(0.02), 0.1)
    with pytest.raises(DomainError):
        ssr_afv(p.with_(rho=-0.5), Kernel.for_params(p), ForwardVarianceCurve.flat(0.02), 0.0)


def test_flipping_rho_flips_skew_but_not_ratio_sign():
    # flipping rho flips skew and beta but keeps the ratio's sign convention
    p = ModelParams(alpha=0.7, nu=0.4, lam=0.0, rho=-0.6, v0=0.02)
    c = ForwardVarianceCurve.flat(0.02)
    neg = ssr_afv(p, Kernel.for_params(p), c, 0.2)
    pos = ssr_afv(p.with_(rho=0.6), Kernel.for_params(p), c, 0.2)
    assert neg.skew < 0 < pos.skew
    assert neg.ssr > 1 and pos.ssr > 1


# --- leading order ------------------------------------------------------------


@given(alpha=st.floats(0.55, 1.0), tau=st.floats(1e-4, 5.0), level=st.floats(1e-3, 1.0))
def test_leading_order_power_law_is_alpha_plus_one(alpha, tau, level):
    k = Kernel("power_law", ModelParams(alpha=alpha, nu=0.3, v0=0.02))
    c = ForwardVarianceCurve.flat(level)
    assert ssr_leading_order(k, c, tau) == pytest.approx(alpha + 1.0, rel=1e-13)
    assert ssr_short_time_limit(k, tau) == pytest.approx(alpha + 1.0, rel=1e-8)


@given(scale=st.floats(0.01, 100.0), tau=st.floats(0.01, 2.0))
def test_leading_order_level_invariance(scale, tau):
    k = Kernel("mittag_leffler", ModelParams(alpha=0.6, nu=0.4, lam=2.0, v0=0.02))
    c = ForwardVarianceCurve.flat(0.025)
    assert ssr_leading_order(k, c.scaled(scale), tau) == ssr_leading_order(k, c, tau)


def test_leading_order_curve_shape_direction():
    # an upward-sloping curve raises the leading-order SSR, a downward one lowers it
    k = Kernel("power_law", ModelParams(alpha=0.6, nu=0.4, v0=0.02))
    up = ForwardVarianceCurve.exponential_decay(0.01, 0.04, 3.0)
    down = ForwardVarianceCurve.exponential_decay(0.04, 0.01, 3.0)
    flat = ForwardVarianceCurve.flat(0.02)
    assert ssr_leading_order(k, down, 1.0) < ssr_leading_order(k, flat, 1.0) < ssr_leading_order(k, up, 1.0)


def test_leading_order_general_reduces_to_affine():
    k = Kernel("mittag_leffler", ModelParams(alpha=0.6, nu=0.4, lam=1.0, v0=0.02))
    c = ForwardVarianceCurve.exponential_decay(0.03, 0.02, 2.0)
    aff = ssr_leading_order(k, c, 0.7)
    gen = ssr_leading_order_general(k, c, 0.7, lambda s: curve_eval(c, s))
    assert gen == pytest.approx(aff, rel=1e-10)


def test_leading_order_tabulated_curve():
    k = Kernel("power_law", ModelParams(alpha=0.6, nu=0.4, v0=0.02))
    tab = ForwardVarianceCurve.tabulated([(0.25, 0.02), (0.5, 0.02), (1.0, 0.02)])
    assert ssr_leading_order(k, tab, 0.8) == pytest.approx(1.6, rel=1e-10)


def test_short_time_limit_of_ml_kernel_tends_to_alpha_plus_one():
    k = Kernel("mittag_leffler", ModelParams(alpha=0.6, nu=0.4, lam=5.0, v0=0.02))
    assert ssr_short_time_limit(k, 1e-8) == pytest.approx(1.6, abs=1e-3)
    assert ssr_short_time_limit(k, 1.0) < 1.6


# --- term structures --------------------------------------------------------------


def test_maturity_grid():
    g = maturity_grid(1e-3, 2.0, 5)
    assert g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(2.0)
    assert np.allclose(np.diff(np.log(g)), np.log(2000) / 4)
    assert np.allclose(np.diff(maturity_grid(0.1, 1.0, 4, "linear")), 0.3)
    with pytest.raises(DomainError):
        maturity_grid(1.0, 0.5, 4)
    with pytest.raises(DomainError):
        maturity_grid(0.1, 0.5, 4, "cubic")


def test_term_structure_csv():
    ts = term_structure_heston(HESTON, [0.1, 0.5])
    lines = ts.to_csv().splitlines()
    assert lines[0] == "tau,sigma_atm,skew,beta,ssr"
    assert len(lines) == 3
    assert float(lines[1].split(",")[4]) == ts.points[0].ssr
    assert np.all(ts.column("ssr") > 1)
    with pytest.raises(DomainError):
        TermStructure(tuple(reversed(ts.points)))


def test_afv_sigma_atm_matches_variance_scale():
    p = ModelParams(alpha=0.6, nu=0.05, lam=0.0, rho=-0.5, v0=0.04)
    pt = ssr_afv(p, Kernel.for_params(p), ForwardVarianceCurve.flat(0.04), 0.5)
    assert pt.sigma_atm == pytest.approx(0.2, rel=1e-2)
    assert math.isclose(pt.total_var, pt.sigma_atm**2 * 0.5, rel_tol=1e-14)
