"""Characteristic exponents psi(tau; a) = log E[exp(i a X_tau)] of log-spot.

Two routes: the affine forward variance form, psi = int_0^tau xi(tau - r) g(r) dr
with g from the convolution Riccati equation, and the closed-form classical
Heston exponent D V + C Vbar.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedConfigurationError
from .model import ForwardVarianceCurve, Kernel, ModelParams, curve_eval
from .riccati import RiccatiGrid, RiccatiSolution, g_integral_weights, kconv_at, solve_riccati


@dataclass(frozen=True)
class CharExponentAFV:
    params: ModelParams
    kernel: Kernel
    curve: ForwardVarianceCurve
    riccati: RiccatiSolution
    tau: float

    def __post_init__(self):
        if self.riccati.tau_max < self.tau * (1 - 1e-12):
            raise DomainError("Riccati grid does not reach tau")


def _psi_from_g(g, grid, j, curve, alpha):
    w = g_integral_weights(grid, j, alpha)
    if curve.kind == "flat":
        wx = w * curve.v0
    else:
        r = np.arange(j + 1) * grid.delta
        wx = w * curve_eval(curve, np.maximum(j * grid.delta - r, 0.0))
    return wx @ g[: j + 1]


def psi_afv(ce: CharExponentAFV):
    """int_0^tau xi(tau - r) g(r; a) dr on the solver grid.

    tau must be a grid node.
    """
    grid = ce.riccati.grid
    j = grid.node_index(ce.tau)
    if j is None:
        raise DomainError(f"tau = {ce.tau} is not a node of the Riccati grid (delta = {grid.delta})")
    out = _psi_from_g(ce.riccati.g, grid, j, ce.curve, ce.kernel.alpha)
    return complex(out) if np.ndim(out) == 0 else out


def dxi_psi_afv(ce: CharExponentAFV):
    """Forward-variance sensitivity D^xi psi = (kappa * g)(tau; a)."""
    return kconv_at(ce.riccati, ce.kernel, ce.tau)


def afv_exponents(params, kernel, curve, tau, a, grid=None):
    """psi and D^xi psi for an array of Fourier arguments with one Riccati solve.

    ``grid`` defaults to the standard density on [0, tau]; it must contain
    tau as a node.
    """
    if tau == 0.0:
        z = np.zeros(np.shape(a), dtype=complex)
        return z, z.copy()
    grid = grid or RiccatiGrid.for_maturity(tau)
    sol = solve_riccati(params, kernel, grid, a)
    ce = CharExponentAFV(params, kernel, curve, sol, tau)
    return psi_afv(ce), dxi_psi_afv(ce)


# ----------------------------------------------------------------------------
# classical Heston
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class HestonCD:
    C: complex
    D: complex
    tau: float
    a: complex


def _heston_cd_arrays(params, tau, a):
    a = np.asarray(a, dtype=complex)
    lam, nu, rho = params.lam, params.nu, params.rho
    ah = -0.5 * a * (a + 1j)
    beta = lam - 1j * rho * nu * a
    d = np.sqrt(beta * beta - 2.0 * ah * nu * nu)
    # choose Re d >= 0 so that |g| < 1 and |exp(-d tau)| <= 1
    d = np.where(d.real < 0, -d, d)
    bpd = beta + d
    safe = bpd != 0
    bpd_s = np.where(safe, bpd, 1.0)
    rm = np.where(safe, 2.0 * ah / bpd_s, 0.0)  # (beta - d)/nu^2 without cancellation
    g = np.where(safe, (beta - d) / bpd_s, 0.0)
    e = np.exp(-d * tau)
    D = rm * (1.0 - e) / (1.0 - g * e)
    C = lam * (rm * tau - 2.0 / nu**2 * np.log1p(g * (1.0 - e) / (1.0 - g)))
    return C, D


def heston_cd(params: ModelParams, tau: float, a) -> HestonCD:
    """Closed-form Heston functions with psi = D V + C Vbar.

    Variance dynamics dV = -lam (V - Vbar) dt + nu sqrt(V) dW, d(W, Z) = rho dt.
    Uses the formulation in which the logarithm never crosses its branch cut.
    """
    if tau < 0:
        raise DomainError("tau must be non-negative")
    C, D = _heston_cd_arrays(params, tau, a)
    if np.ndim(C) == 0:
        return HestonCD(C=complex(C), D=complex(D), tau=tau, a=complex(a))
    return HestonCD(C=C, D=D, tau=tau, a=np.asarray(a, dtype=complex))


def heston_psi(params, tau, a, v0=None, vbar=None):
    """D V + C Vbar, vectorised over a."""
    C, D = _heston_cd_arrays(params, tau, a)
    v0 = params.v0 if v0 is None else v0
    vbar = params.vbar if vbar is None else vbar
    return D * v0 + C * vbar


def heston_exponents(params, tau, a):
    """psi and D^xi psi = nu D for classical Heston."""
    C, D = _heston_cd_arrays(params, tau, a)
    return D * params.v0 + C * params.vbar, params.nu * D


def heston_curve(params):
    """The forward variance curve implied by classical Heston parameters."""
    if params.lam == 0.0 or params.vbar == params.v0:
        return ForwardVarianceCurve.flat(params.v0)
    if params.vbar <= 0:
        raise UnsupportedConfigurationError("Heston curve needs vbar > 0 when lambda > 0")
    return ForwardVarianceCurve.exponential_decay(params.v0, params.vbar, params.lam)
