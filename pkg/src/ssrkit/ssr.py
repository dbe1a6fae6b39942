"""ATM skew, spot-vol regression coefficient beta and the skew-stickiness ratio.

All quantities are read off Lewis-type integrals of the characteristic
function phi(a - i/2) = exp(psi(a - i/2)) over a >= 0:

    J_S    = int a Im[phi] / (a^2 + 1/4) da
    J_beta = int Re[D^xi psi * phi] / (a^2 + 1/4) da

    skew = -exp(Sigma/8) sqrt(2/pi) / sqrt(tau) * J_S
    beta = -rho exp(Sigma/8) sqrt(2/pi) / sqrt(tau) * J_beta
    SSR  = beta / skew = rho J_beta / J_S

where Sigma is the ATM total implied variance. Every callable ``psi`` or
``dxi_psi`` accepted here maps an array of real a to the complex values at
the shifted argument a - i/2.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import constants as C
from .charfn import afv_exponents, heston_exponents
from .errors import DegenerateSkewError, DomainError, UnsupportedConfigurationError
from .model import (
    ForwardVarianceCurve,
    ModelParams,
    curve_eval,
    curve_integral,
    kernel_cumulative,
    kernel_double_integral,
)
from .numerics import LewisRule, QuadratureSpec, find_root_bracketed, find_truncation, lewis_rule
from .riccati import RiccatiGrid


@dataclass(frozen=True)
class SsrPoint:
    tau: float
    skew: float
    beta: float
    ssr: float
    sigma_atm: float
    total_var: float


@dataclass(frozen=True)
class TermStructure:
    points: tuple
    label: str = ""
    params_snapshot: ModelParams | None = None
    curve_snapshot: ForwardVarianceCurve | None = None

    def __post_init__(self):
        taus = [p.tau for p in self.points]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise DomainError("term structure maturities must be strictly increasing")

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "sigma_atm", "skew", "beta", "ssr"])
        for p in self.points:
            w.writerow(["%.17g" % v for v in (p.tau, p.sigma_atm, p.skew, p.beta, p.ssr)])
        return buf.getvalue()


def bs_atm(w):
    """Undiscounted ATM Black-Scholes call on unit spot with total variance w."""
    w = np.asarray(w, dtype=float)
    return special.erf(np.sqrt(w) / (2.0 * math.sqrt(2.0)))


# ----------------------------------------------------------------------------
# evaluation of the exponents on quadrature nodes
# ----------------------------------------------------------------------------


class _ExponentCache:
    """Memoises (psi, D^xi psi) per node so that adaptive refinement and the
    final integration pass never evaluate the model twice at the same a."""

    def __init__(self, fn):
        self.fn = fn
        self.store = {}

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        new = np.unique(np.array([x for x in a.ravel() if x not in self.store]))
        if new.size:
            ps, dx = self.fn(new)
            ps = np.broadcast_to(ps, new.shape)
            dx = np.broadcast_to(dx, new.shape)
            for x, p, d in zip(new, ps, dx):
                self.store[float(x)] = (complex(p), complex(d))
        out = np.array([self.store[float(x)] for x in a.ravel()]).reshape(a.shape + (2,))
        return out[..., 0], out[..., 1]


def _integrands(ev, w_ref):
    """Vector integrand: call-price correction, J_S and J_beta densities."""

    def f(a):
        ps, dx = ev(a)
        phi = np.exp(ps)
        q = a * a + 0.25
        ref = np.exp(-0.5 * q * w_ref)
        return np.stack([(ref - phi.real) / q, a * phi.imag / q, (dx * phi).real / q])

    return f


def _truncate_stepwise(f, threshold, batch=3):
    """Truncation point found by probing outwards a few points at a time.

    Stops as soon as ``batch`` consecutive probes are negligible, so the
    expensive integrand is never asked for absurdly large a.
    """
    from .numerics import _PROBES

    quiet = 0
    for i, p in enumerate(_PROBES):
        v = np.asarray(f(np.array([p, 1.37 * p])))
        if not np.all(np.isfinite(v)):
            raise DomainError("integrand not finite while probing its tail")
        if np.max(np.abs(v)) < threshold:
            quiet += 1
            if quiet >= batch:
                return float(_PROBES[i - batch + 1])
        else:
            quiet = 0
    return find_truncation(f, threshold)


@dataclass(frozen=True)
class _Integrals:
    total_var: float
    j_s: float
    j_beta: float
    rule: LewisRule


def _lewis_integrals(ev, tau, spec, rule=None):
    spec = spec or QuadratureSpec()
    psi0 = ev(np.array([0.0]))[0][0]
    w_ref = -8.0 * psi0.real
    if not w_ref > 0:
        raise DomainError(f"psi(-i/2) = {psi0} does not define a positive reference variance")
    f = _integrands(ev, w_ref)
    if rule is None:
        a_max = _truncate_stepwise(f, spec.truncation_threshold)
        rule = lewis_rule(f, spec, a_max=a_max)
    vals = np.asarray(f(rule.nodes)) @ rule.weights
    price = float(bs_atm(w_ref)) + vals[0] / math.pi
    total_var = _invert_atm(price)
    return _Integrals(total_var, float(vals[1]), float(vals[2]), rule)


def _invert_atm(price):
    lo, hi = C.SIGMA_BRACKET
    return find_root_bracketed(lambda w: float(bs_atm(w)) - price, lo, hi, tol=1e-15)


def _prefactor(total_var, tau):
    return math.exp(total_var / 8.0) * math.sqrt(2.0 / math.pi) / math.sqrt(tau)


# ----------------------------------------------------------------------------
# model-free formulas (any characteristic exponent)
# ----------------------------------------------------------------------------


def _pair(psi, dxi_psi=None):
    if dxi_psi is None:
        return lambda a: (psi(a), np.zeros(np.shape(a), dtype=complex))
    return lambda a: (psi(a), dxi_psi(a))


def atm_total_variance(psi, spec=None):
    """ATM total implied variance Sigma = sigma_atm^2 tau from the exponent.

    The call price at k = 0 is computed with a Black-Scholes control variate
    whose variance matches psi(-i/2), then inverted on (1e-12, 16).
    """
    spec = spec or QuadratureSpec()
    ev = _ExponentCache(_pair(psi))
    psi0 = ev(np.array([0.0]))[0][0]
    w_ref = -8.0 * psi0.real
    if not w_ref > 0:
        raise DomainError(f"psi(-i/2) = {psi0} does not define a positive reference variance")

    def f(a):
        ps, _ = ev(a)
        q = a * a + 0.25
        return (np.exp(-0.5 * q * w_ref) - np.exp(ps).real) / q

    a_max = _truncate_stepwise(f, spec.truncation_threshold)
    rule = lewis_rule(f, spec, a_max=a_max)
    price = float(bs_atm(w_ref)) + rule.integrate(f) / math.pi
    return _invert_atm(price)


def skew_from_cf(psi, tau, sigma2tau, spec=None):
    """ATM skew d sigma_BS / dk at k = 0."""
    spec = spec or QuadratureSpec()

    def f(a):
        return a * np.exp(psi(a)).imag / (a * a + 0.25)

    j_s = _integrate_scalar(f, spec)
    return -_prefactor(sigma2tau, tau) * j_s


def beta_from_cf(psi, dxi_psi, rho, tau, sigma2tau, spec=None):
    """Spot-vol regression coefficient from the forward-variance sensitivity."""
    spec = spec or QuadratureSpec()
    if rho == 0.0:
        return 0.0

    def f(a):
        return (dxi_psi(a) * np.exp(psi(a))).real / (a * a + 0.25)

    j_b = _integrate_scalar(f, spec)
    return -rho * _prefactor(sigma2tau, tau) * j_b


def _integrate_scalar(f, spec):
    a_max = _truncate_stepwise(f, spec.truncation_threshold)
    rule = lewis_rule(f, spec, a_max=a_max)
    return float(rule.integrate(f))


def _assemble(ints, rho, tau):
    if rho == 0.0:
        raise DegenerateSkewError("rho = 0: skew and beta both vanish and the SSR is 0/0")
    if abs(ints.j_s) < C.SKEW_DEGENERACY:
        raise DegenerateSkewError(f"skew integral {ints.j_s:g} is numerically zero")
    pre = _prefactor(ints.total_var, tau)
    skew = -pre * ints.j_s
    ssr = rho * ints.j_beta / ints.j_s
    return SsrPoint(
        tau=float(tau),
        skew=skew,
        beta=ssr * skew,
        ssr=ssr,
        sigma_atm=math.sqrt(ints.total_var / tau),
        total_var=ints.total_var,
    )


def ssr_general(psi, dxi_psi, rho, tau, spec=None, *, rule=None):
    """SSR, skew and beta for an arbitrary model given psi and D^xi psi.

    Both integrals share one adaptive rule. ``rule`` reuses a previously
    built LewisRule instead of refining anew.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    ev = _ExponentCache(_pair(psi, dxi_psi))
    ints = _lewis_integrals(ev, tau, spec, rule)
    return _assemble(ints, rho, tau)


# ----------------------------------------------------------------------------
# affine forward variance and classical Heston
# ----------------------------------------------------------------------------


def afv_evaluator(params, kernel, curve, tau, grid=None):
    """Cached a -> (psi(a - i/2), D^xi psi(a - i/2)) for an AFV model."""
    grid = grid or RiccatiGrid.for_maturity(tau)
    return _ExponentCache(lambda a: afv_exponents(params, kernel, curve, tau, a - 0.5j, grid=grid))


def heston_evaluator(params, tau):
    if params.alpha != 1.0:
        raise UnsupportedConfigurationError("classical Heston needs alpha = 1")
    return _ExponentCache(lambda a: heston_exponents(params, tau, a - 0.5j))


def ssr_afv(params, kernel, curve, tau, spec=None, *, grid=None, rule=None, return_rule=False):
    """SSR of an affine forward variance model, one Riccati solve per batch of nodes."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    ev = afv_evaluator(params, kernel, curve, tau, grid)
    ints = _lewis_integrals(ev, tau, spec, rule)
    pt = _assemble(ints, params.rho, tau)
    return (pt, ints.rule) if return_rule else pt


def ssr_heston(params, tau, spec=None, *, rule=None, return_rule=False):
    """SSR of classical Heston via the closed-form exponent (no Riccati solve)."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    ev = heston_evaluator(params, tau)
    ints = _lewis_integrals(ev, tau, spec, rule)
    pt = _assemble(ints, params.rho, tau)
    return (pt, ints.rule) if return_rule else pt


# ----------------------------------------------------------------------------
# leading order and short-time limit
# ----------------------------------------------------------------------------


def _xi_ktilde_integral(kernel, curve, tau, weight=None):
    """int_0^tau e(s) ktilde(tau - s) ds with e = weight or the curve."""
    if weight is None and curve.is_flat:
        return curve.v0 * kernel_double_integral(kernel, tau)
    e = weight or (lambda s: curve_eval(curve, s))
    # ktilde(tau - s) ~ (tau - s)^alpha near s = tau: algebraic end-point weight
    alpha = kernel.alpha
    pts = None
    if curve.kind == "tabulated":
        pts = [t for t, _ in curve.table if 0 < t < tau]

    def g(s):
        u = tau - s
        if u <= 0:
            return 0.0
        return e(s) * kernel_cumulative(kernel, u) / u**alpha

    if pts:
        edges = [0.0] + pts + [tau]
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi == tau:
                total += integrate.quad(g, lo, hi, weight="alg", wvar=(0.0, alpha), epsabs=0, epsrel=1e-13)[0]
            else:
                total += integrate.quad(lambda s: g(s) * (tau - s) ** alpha, lo, hi, epsabs=0, epsrel=1e-13)[0]
        return total
    return integrate.quad(g, 0.0, tau, weight="alg", wvar=(0.0, alpha), epsabs=0, epsrel=1e-13, limit=200)[0]


def ssr_leading_order(kernel, curve, tau):
    """(int xi) ktilde(tau) / int_0^tau xi(s) ktilde(tau - s) ds.

    For a flat curve the level cancels before any arithmetic is done, so the
    result is exactly invariant under rescaling the curve.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    kt = kernel_cumulative(kernel, tau)
    if curve.is_flat:
        return tau * kt / kernel_double_integral(kernel, tau)
    return curve_integral(curve, tau) * kt / _xi_ktilde_integral(kernel, curve, tau)


def ssr_leading_order_general(kernel, curve, tau, expect_sqrtv_f, v0=None):
    """Leading-order SSR for a general volatility-of-volatility function f.

    ``expect_sqrtv_f(s)`` returns E[sqrt(V_s) f_s(xi)] for s in [0, tau]; its
    value at 0 is sqrt(V_t) f_t(xi). In the affine case it is the forward
    variance curve itself and the result reduces to ssr_leading_order.
    """
    v0 = curve_eval(curve, 0.0) if v0 is None else v0
    num = curve_integral(curve, tau) * expect_sqrtv_f(0.0) * kernel_cumulative(kernel, tau)
    return num / (v0 * _xi_ktilde_integral(kernel, curve, tau, weight=expect_sqrtv_f))


def ssr_short_time_limit(kernel, tau, h=1e-4):
    """tau d/dtau log int_0^tau ktilde, by a centred difference in log tau."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    up = kernel_double_integral(kernel, tau * math.exp(h))
    dn = kernel_double_integral(kernel, tau * math.exp(-h))
    return (math.log(up) - math.log(dn)) / (2.0 * h)


# ----------------------------------------------------------------------------
# term structures
# ----------------------------------------------------------------------------


def maturity_grid(tmin=C.TS_MIN_TAU, tmax=C.TS_MAX_TAU, n=C.TS_N, spacing="log"):
    if not (0 < tmin < tmax) or n < 2:
        raise DomainError("maturity grid needs 0 < min < max and n >= 2")
    if spacing == "log":
        return np.geomspace(tmin, tmax, n)
    if spacing == "linear":
        return np.linspace(tmin, tmax, n)
    raise DomainError(f"unknown spacing {spacing!r}")


def term_structure_afv(params, kernel, curve, taus, spec=None, label="afv", steps_per_year=None):
    pts = []
    for t in taus:
        grid = RiccatiGrid.for_maturity(t) if steps_per_year is None else RiccatiGrid.for_maturity(t, steps_per_year)
        pts.append(ssr_afv(params, kernel, curve, float(t), spec, grid=grid))
    return TermStructure(tuple(pts), label, params, curve)


def term_structure_heston(params, taus, spec=None, label="heston"):
    from .charfn import heston_curve

    pts = [ssr_heston(params, float(t), spec) for t in taus]
    return TermStructure(tuple(pts), label, params, heston_curve(params))
