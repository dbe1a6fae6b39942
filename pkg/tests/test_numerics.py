import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from ssrkit.errors import BracketError, DomainError, QuadratureError
from ssrkit.numerics import (
    QuadratureSpec,
    find_root_bracketed,
    find_truncation,
    integrate_lewis,
    lewis_rule,
    mittag_leffler,
    mittag_leffler_2p,
)


def ml_oracle(alpha, beta, x):
    """Power series summed at 60 digits."""
    with mpmath.workdps(60):
        return float(mpmath.nsum(lambda k: mpmath.mpf(x) ** k * mpmath.rgamma(alpha * k + beta), [0, mpmath.inf]))


# --- Mittag-Leffler ----------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.55, 0.6, 0.8, 0.95])
@pytest.mark.parametrize("beta_kind", ["alpha", "one", "alpha+1", "2alpha+1"])
@pytest.mark.parametrize("x", [-0.01, -0.7, -3.0, -8.0, -16.0])
def test_ml_against_multiprecision_series(alpha, beta_kind, x):
    beta = {"alpha": alpha, "one": 1.0, "alpha+1": alpha + 1, "2alpha+1": 2 * alpha + 1}[beta_kind]
    assert mittag_leffler(alpha, beta, x) == pytest.approx(ml_oracle(alpha, beta, x), rel=1e-10)


@pytest.mark.parametrize("x", [-40.0, -100.0, -1e4])
def test_ml_large_argument_uses_asymptotics(x):
    # E_{a,a}(x) ~ -sum_k x^-k / Gamma(a - a k); two terms suffice far out
    a = 0.6
    approx = -sum(x ** (-k) * special.rgamma(a - a * k) for k in range(1, 4))
    got = mittag_leffler_2p(a, x)
    assert got == pytest.approx(approx, rel=1e-3 if x > -1e3 else 1e-8)


def test_ml_alpha_one_is_exponential():
    xs = np.linspace(-30.0, 0.0, 301)
    assert np.max(np.abs(mittag_leffler_2p(1.0, xs) - np.exp(xs))) <= 1e-10


def test_ml_zero_argument():
    assert mittag_leffler(0.6, 1.3, 0.0) == pytest.approx(1.0 / math.gamma(1.3), rel=1e-15)


def test_ml_vectorised_matches_scalar():
    xs = -np.geomspace(1e-3, 30.0, 40)
    vec = mittag_leffler(0.7, 1.0, xs)
    assert vec.shape == xs.shape
    for x, v in zip(xs, vec):
        assert v == mittag_leffler(0.7, 1.0, float(x))


@given(
    alpha=st.floats(0.52, 0.99),
    beta=st.floats(0.5, 2.0),
    x=st.floats(-12.0, -1e-3),
)
def test_ml_three_term_identity(alpha, beta, x):
    # E_{a,b}(x) = 1/Gamma(b) + x E_{a,a+b}(x)
    lhs = mittag_leffler(alpha, beta, x)
    rhs = special.rgamma(beta) + x * mittag_leffler(alpha, alpha + beta, x)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


@given(alpha=st.floats(0.52, 1.0), x=st.floats(-20.0, -1e-6))
def test_ml_relaxation_is_completely_monotone_bounded(alpha, x):
    # E_alpha(-t) lies in (0, 1) on the negative axis
    v = mittag_leffler(alpha, 1.0, x)
    assert 0.0 < v < 1.0


def test_ml_domain_errors():
    with pytest.raises(DomainError):
        mittag_leffler(0.0, 1.0, -1.0)
    with pytest.raises(DomainError):
        mittag_leffler(0.6, 1.0, 0.5)
    with pytest.raises(DomainError):
        mittag_leffler(0.6, 1.0, float("nan"))


# --- quadrature ---------------------------------------------------------------


def test_integrate_gaussian_half_line():
    # int_0^inf exp(-a^2/2) da = sqrt(pi/2)
    v = integrate_lewis(lambda a: np.exp(-0.5 * a * a))
    assert v == pytest.approx(math.sqrt(math.pi / 2), rel=1e-10)


def test_integrate_lorentzian_with_exponential_tail():
    # int_0^inf exp(-a) / (a^2 + 1/4) da against scipy's adaptive quad
    from scipy import integrate

    f = lambda a: np.exp(-a) / (a * a + 0.25)  # noqa: E731
    ref = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    assert integrate_lewis(f) == pytest.approx(ref, rel=1e-9)


def test_vector_integrand_components():
    f = lambda a: np.vstack([np.exp(-a), a * np.exp(-a), np.exp(-2 * a)])  # noqa: E731
    v = integrate_lewis(f)
    assert v == pytest.approx([1.0, 1.0, 0.5], rel=1e-10)


def test_rule_reuse_is_exact_replay():
    f = lambda a: np.cos(a) * np.exp(-0.3 * a * a)  # noqa: E731
    v, rule = integrate_lewis(f, return_rule=True)
    assert rule.integrate(f) == v
    assert rule.nodes.size == rule.weights.size
    assert rule.a_max > 0


def test_truncation_failure_raises():
    with pytest.raises(QuadratureError):
        find_truncation(lambda a: 1.0 / (1.0 + a), 1e-13)


def test_truncation_of_fast_decay():
    a_max = find_truncation(lambda a: np.exp(-a), 1e-13)
    assert math.exp(-a_max) < 1e-13
    assert a_max <= 2 * 30.0 * 1.37


def test_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(max_panels=0)


def test_max_panels_bounds_refinement():
    f = lambda a: np.sin(40 * a) * np.exp(-a / 5)  # noqa: E731
    with pytest.raises(QuadratureError):
        lewis_rule(f, QuadratureSpec(abs_tol=1e-15, rel_tol=1e-15, max_panels=2), a_max=200.0)


# --- root finding -------------------------------------------------------------


@given(c=st.floats(0.01, 15.0))
def test_root_of_monotone_function(c):
    r = find_root_bracketed(lambda x: x**3 - c, 0.0, 3.0)
    assert r == pytest.approx(c ** (1 / 3), rel=1e-12)


def test_root_requires_bracket():
    with pytest.raises(BracketError):
        find_root_bracketed(lambda x: x * x + 1, -1.0, 1.0)
    with pytest.raises(BracketError):
        find_root_bracketed(lambda x: float("nan"), 0.0, 1.0)
