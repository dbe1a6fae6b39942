"""Bias of a regression coefficient estimated over a finite window.

With a window delta and maturity tau, the ratio of the windowed coefficient
to the instantaneous one is

    [int_0^delta e(s) ds int_s^tau kappa(u - s) du / int_0^delta e(s) (tau - s) ds]
        * [tau / int_0^tau kappa(u) du],

where e(s) is the expected variance under the physical measure (constant by
default). It never exceeds 1 / (1 - epsilon/2) with epsilon = delta / tau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, special

from .errors import DomainError
from .model import Kernel, kernel_eval

_QUAD = dict(epsabs=0.0, epsrel=1e-13, limit=200)


@dataclass(frozen=True)
class DiscretenessReport:
    ratio: float
    bound: float
    first_order: float
    epsilon: float
    gamma: float | None = None


def _kernel_parts(kernel):
    """(exponent, smooth) with kappa(u) = u^exponent * smooth(u)."""
    if isinstance(kernel, Kernel):
        if kernel.kind == "exponential":
            return 0.0, lambda u: kernel_eval(kernel, max(u, 1e-300))
        e = kernel.alpha - 1.0
        at0 = kernel.params.nu / special.gamma(kernel.alpha)
        return e, lambda u: kernel_eval(kernel, u) / u**e if u > 0 else at0
    gamma = float(kernel)
    if not 0.0 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    return -gamma, lambda u: 1.0


def _cumulative(exponent, smooth, x):
    """int_0^x u^exponent smooth(u) du."""
    if x <= 0:
        return 0.0
    if exponent == 0.0:
        return integrate.quad(smooth, 0.0, x, **_QUAD)[0]
    return integrate.quad(smooth, 0.0, x, weight="alg", wvar=(exponent, 0.0), **_QUAD)[0]


def ratio_general(kernel, delta, tau, expected_variance=None):
    """beta^delta / beta by nested quadrature.

    ``kernel`` is a Kernel or a pure power-law exponent gamma (kappa = u^-gamma).
    ``expected_variance`` is an optional s -> E^P[V_s]; constant if omitted.
    """
    if not 0.0 < delta < tau:
        raise DomainError("need 0 < delta < tau")
    exponent, smooth = _kernel_parts(kernel)
    e = expected_variance or (lambda s: 1.0)

    def inner(s):
        return _cumulative(exponent, smooth, tau - s)

    num = integrate.quad(lambda s: e(s) * inner(s), 0.0, delta, **_QUAD)[0]
    den = integrate.quad(lambda s: e(s) * (tau - s), 0.0, delta, **_QUAD)[0]
    return num / den * tau / _cumulative(exponent, smooth, tau)


def ratio_power_law(gamma, epsilon):
    """Closed form for kappa = A u^-gamma: (1 - (1-eps)^(2-gamma)) / ((1 - gamma/2)(1 - (1-eps)^2))."""
    if not 0.0 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    q = math.log1p(-epsilon)
    return (-math.expm1((2.0 - gamma) * q)) / ((1.0 - gamma / 2.0) * -math.expm1(2.0 * q))


def max_relative_error(epsilon):
    """Upper bound 1 / (1 - epsilon/2) on the ratio."""
    if not 0.0 <= epsilon < 2.0:
        raise DomainError(f"epsilon must lie in [0, 2), got {epsilon}")
    return 1.0 / (1.0 - 0.5 * epsilon)


def first_order(gamma, epsilon):
    return 1.0 + 0.5 * gamma * epsilon


def report_power_law(gamma, epsilon):
    return DiscretenessReport(
        ratio=ratio_power_law(gamma, epsilon),
        bound=max_relative_error(epsilon),
        first_order=first_order(gamma, epsilon),
        epsilon=epsilon,
        gamma=gamma,
    )
