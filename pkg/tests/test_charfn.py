import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from ssrkit.charfn import (
    CharExponentAFV,
    afv_exponents,
    heston_cd,
    heston_curve,
    heston_exponents,
    heston_psi,
    psi_afv,
)
from ssrkit.errors import DomainError
from ssrkit.model import ForwardVarianceCurve, Kernel, ModelParams, curve_integral
from ssrkit.riccati import RiccatiGrid, solve_riccati


def heston(rho=-0.7, lam=1.5, nu=0.5, v0=0.04, vbar=0.02):
    return ModelParams(alpha=1.0, nu=nu, lam=lam, rho=rho, vbar=vbar, v0=v0)


def ode_cd(p, tau, a):
    """C and D by integrating the Heston Riccati ODE with a stiff solver."""

    def rhs(t, y):
        d = y[0] + 1j * y[1]
        dd = -0.5 * a * (a + 1j) + (1j * p.rho * p.nu * a - p.lam) * d + 0.5 * p.nu**2 * d * d
        dc = p.lam * d
        return [dd.real, dd.imag, dc.real, dc.imag]

    sol = solve_ivp(rhs, (0, tau), [0, 0, 0, 0], method="DOP853", rtol=1e-12, atol=1e-14)
    y = sol.y[:, -1]
    return y[2] + 1j * y[3], y[0] + 1j * y[1]


@pytest.mark.parametrize("tau", [0.05, 1.0, 10.0])
@pytest.mark.parametrize("a", [0.0 - 0.5j, 1.3 - 0.5j, 7.0 - 0.5j, 25.0 - 0.5j])
def test_heston_closed_form_against_ode(tau, a):
    p = heston()
    c, d = ode_cd(p, tau, a)
    cd = heston_cd(p, tau, a)
    assert abs(cd.D - d) <= 1e-8 * max(1.0, abs(d))
    assert abs(cd.C - c) <= 1e-8 * max(1.0, abs(c))


@given(a=st.floats(-60.0, 60.0), rho=st.floats(-0.99, 0.99), tau=st.floats(0.01, 30.0))
def test_heston_exponent_has_non_positive_real_part_in_strip(a, rho, tau):
    # |phi(a - i/2)| <= phi(-i/2) <= 1 for a martingale spot
    p = heston(rho=rho)
    psi = heston_psi(p, tau, a - 0.5j)
    assert psi.real <= heston_psi(p, tau, -0.5j).real + 1e-12
    assert np.isfinite(psi)


def test_heston_branch_is_continuous_in_a():
    # a long maturity makes a naive logarithm wrap; the exponent must vary smoothly
    p = heston(rho=-0.9, lam=0.5, nu=1.0)
    a = np.linspace(0.0, 40.0, 4001) - 0.5j
    psi = heston_psi(p, 20.0, a)
    jumps = np.abs(np.diff(psi))
    assert np.max(jumps) < 50 * np.median(jumps) + 1e-12


def test_heston_constraints():
    for lam in (0.0, 0.3, 2.0):
        for rho in (-0.95, 0.0, 0.95):
            p = heston(rho=rho, lam=lam)
            z = heston_psi(p, 2.0, np.array([0.0, -1j]))
            assert np.max(np.abs(z)) <= 1e-14


def test_heston_exponents_sensitivity_is_nu_d():
    p = heston()
    psi, dxi = heston_exponents(p, 0.7, np.array([1.0 - 0.5j]))
    cd = heston_cd(p, 0.7, 1.0 - 0.5j)
    assert dxi[0] == pytest.approx(p.nu * cd.D)
    assert psi[0] == pytest.approx(cd.D * p.v0 + cd.C * p.vbar)


def test_heston_curve_kinds():
    assert heston_curve(heston(lam=0.0)).kind == "flat"
    assert heston_curve(heston(v0=0.02, vbar=0.02)).is_flat
    c = heston_curve(heston())
    assert c.kind == "exponential_decay" and c.lam == 1.5


def test_afv_route_matches_heston_psi():
    p = heston()
    curve = heston_curve(p)
    a = np.array([0.2, 2.0, 9.0]) - 0.5j
    psi, dxi = afv_exponents(p, Kernel("exponential", p), curve, 1.0, a, grid=RiccatiGrid(2048, 1.0))
    np.testing.assert_allclose(psi, heston_psi(p, 1.0, a), rtol=1e-6)
    np.testing.assert_allclose(dxi, heston_exponents(p, 1.0, a)[1], rtol=1e-6)


def test_afv_exponent_of_deterministic_limit():
    # nu -> 0: psi = -a(a+i)/2 int xi
    p = ModelParams(alpha=0.6, nu=1e-10, lam=0.0, rho=-0.5, v0=0.03)
    curve = ForwardVarianceCurve.exponential_decay(0.03, 0.05, 2.0)
    a = np.array([1.0 - 0.5j])
    psi, _ = afv_exponents(p, Kernel.for_params(p), curve, 0.5, a)
    want = -0.5 * a * (a + 1j) * curve_integral(curve, 0.5)
    # trapezoid error in the curve integral is O(delta^2) ~ 1e-6 here
    assert abs(psi[0] - want[0]) <= 2e-6 * abs(want[0])


def test_afv_zero_maturity_and_off_node():
    p = ModelParams(alpha=0.6, nu=0.4, lam=0.0, rho=-0.5, v0=0.03)
    k = Kernel.for_params(p)
    curve = ForwardVarianceCurve.flat(0.03)
    psi, dxi = afv_exponents(p, k, curve, 0.0, np.array([1.0]))
    assert psi[0] == 0 and dxi[0] == 0
    grid = RiccatiGrid(64, 1.0)
    sol = solve_riccati(p, k, grid, np.array([1.0 - 0.5j]))
    with pytest.raises(DomainError):
        psi_afv(CharExponentAFV(p, k, curve, sol, 0.3))
    with pytest.raises(DomainError):
        CharExponentAFV(p, k, curve, sol, 2.0)
