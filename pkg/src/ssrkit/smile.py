"""Lewis call pricing, implied volatility, the bump-and-reprice beta oracle
and smile calibration of rough Heston parameter sets."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import constants as C
from .charfn import _psi_from_g, heston_psi
from .errors import BracketError, DomainError, RiccatiDivergenceError, UnsupportedConfigurationError
from .model import ForwardVarianceCurve, Kernel, ModelParams
from .numerics import QuadratureSpec, find_root_bracketed, lewis_rule
from .riccati import RiccatiGrid, solve_riccati
from .ssr import _truncate_stepwise, atm_total_variance


@dataclass(frozen=True)
class SmilePoint:
    k: float
    iv: float
    tau: float

    def __post_init__(self):
        if not self.iv > 0:
            raise DomainError("implied vol must be positive")


@dataclass(frozen=True)
class CalibrationResult:
    lambda_fixed: float
    h_fit: float
    nu_fit: float
    objective: float
    iterations: int
    converged: bool = True
    message: str = ""

    def report(self):
        return (
            f"lambda = {self.lambda_fixed:.17g}\n"
            f"h_fit = {self.h_fit:.17g}\n"
            f"nu_fit = {self.nu_fit:.17g}\n"
            f"objective = {self.objective:.17g}\n"
            f"iterations = {self.iterations}\n"
            f"converged = {str(self.converged).lower()}\n"
        )


def bs_price(k, w):
    """Normalised Black-Scholes call, unit spot, strike e^k, total variance w."""
    k = np.asarray(k, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("total variance must be non-negative")
    sw = np.sqrt(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(sw > 0, -k / np.where(sw > 0, sw, 1.0) + sw / 2, 0.0)
    d2 = d1 - sw
    out = np.where(sw > 0, special.ndtr(d1) - np.exp(k) * special.ndtr(d2), np.maximum(1.0 - np.exp(k), 0.0))
    return float(out) if out.ndim == 0 else out


def _lewis_integrand(psi_vals_fn, ks, w_ref):
    ks = np.atleast_1d(np.asarray(ks, dtype=float))

    def f(a):
        ps = psi_vals_fn(a)
        q = a * a + 0.25
        diff = np.exp(-0.5 * q * w_ref) - np.exp(ps)
        return (np.exp(-1j * np.outer(ks, a)) * diff[None, :]).real / q

    return f


def lewis_call(psi, k, spec=None, *, rule=None):
    """Call price from the exponent psi(a - i/2) (vectorised in a).

    A Black-Scholes price with matching psi(-i/2) serves as control variate,
    so the integral only carries the difference. ``k`` may be an array.
    """
    spec = spec or QuadratureSpec()
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    psi0 = complex(np.atleast_1d(psi(np.array([0.0])))[0])
    w_ref = max(-8.0 * psi0.real, 0.0)
    f = _lewis_integrand(psi, ks, w_ref)
    if rule is None:
        a_max = _truncate_stepwise(f, spec.truncation_threshold)
        rule = lewis_rule(f, spec, a_max=a_max)
    corr = np.asarray(f(rule.nodes)) @ rule.weights
    out = np.asarray(bs_price(ks, w_ref) + np.exp(ks / 2) * corr / math.pi)
    return float(out[0]) if np.ndim(k) == 0 else out


def implied_vol(price, k, tau):
    """Black-Scholes implied volatility of a normalised call price."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    lower = max(1.0 - math.exp(k), 0.0)
    if not lower < price < 1.0:
        raise DomainError(f"price {price} outside the no-arbitrage band ({lower}, 1) for k = {k}")
    hi = 1.0
    while bs_price(k, hi * hi * tau) < price:
        hi *= 2.0
        if hi > 1e4:
            raise BracketError("implied vol above 1e4")
    return find_root_bracketed(lambda s: bs_price(k, s * s * tau) - price, 0.0, hi, tol=1e-16)


def atm_vega(total_var, tau):
    """d C_BS / d sigma at k = 0: exp(-Sigma/8) sqrt(tau / (2 pi))."""
    return math.exp(-total_var / 8.0) * math.sqrt(tau / (2.0 * math.pi))


def beta_bump_oracle(params: ModelParams, tau, bump=C.BUMP_DEFAULT, spec=None):
    """beta = rho nu (dC/dV) / vega with dC/dV from centred bumps of V.

    Classical Heston only. All three prices share one quadrature rule. A
    RuntimeWarning is issued when halving the bump moves the result by more
    than 1e-6 relative.
    """
    if params.alpha != 1.0:
        raise UnsupportedConfigurationError("bump oracle needs classical Heston (alpha = 1)")
    if not bump > 0:
        raise DomainError("bump must be positive")
    if params.rho == 0.0:
        return 0.0
    spec = spec or QuadratureSpec()
    a_shift = -0.5j
    base = lambda a: heston_psi(params, tau, a + a_shift)  # noqa: E731
    total_var = atm_total_variance(base, spec)

    def psi_v(v):
        return lambda a: heston_psi(params, tau, a + a_shift, v0=v)

    # one rule for all bumped prices, built on the base integrand
    w_ref = -8.0 * complex(base(np.array([0.0]))[0]).real
    f = _lewis_integrand(base, [0.0], w_ref)
    rule = lewis_rule(f, spec, a_max=_truncate_stepwise(f, spec.truncation_threshold))

    def deriv(h):
        up = lewis_call(psi_v(params.v0 + h), 0.0, spec, rule=rule)
        dn = lewis_call(psi_v(params.v0 - h), 0.0, spec, rule=rule)
        return (up - dn) / (2.0 * h)

    vega = atm_vega(total_var, tau)
    beta = params.rho * params.nu * deriv(bump) / vega
    beta_half = params.rho * params.nu * deriv(0.5 * bump) / vega
    if abs(beta_half - beta) > 1e-6 * abs(beta):
        warnings.warn(
            f"bump {bump:g} is not in the linear regime: halving it moves beta by "
            f"{abs(beta_half / beta - 1):.2e} relative",
            RuntimeWarning,
            stacklevel=2,
        )
    return beta


# ----------------------------------------------------------------------------
# calibration
# ----------------------------------------------------------------------------

CALIB_MATURITIES = (1.0 / 12.0, 0.25, 0.5, 1.0)
CALIB_XI = 0.025
CALIB_RHO = -0.65
CALIB_STEPS = 516  # every calibration maturity is a node of the grid on [0, 1]


class SmileEngine:
    """Prices a set of maturities and strikes for rough Heston parameters.

    One Riccati solve on [0, max maturity] serves every maturity; the Lewis
    rule is frozen after the first build so that objective values are
    smooth in the parameters.
    """

    def __init__(self, maturities=CALIB_MATURITIES, xi=CALIB_XI, n_steps=CALIB_STEPS, spec=None):
        self.maturities = tuple(float(t) for t in maturities)
        self.curve = ForwardVarianceCurve.flat(xi)
        self.grid = RiccatiGrid(n_steps, max(self.maturities))
        self.idx = []
        for t in self.maturities:
            j = self.grid.node_index(t, tol=1e-9)
            if j is None:
                raise DomainError(f"maturity {t} is not a node of the calibration grid")
            self.idx.append(j)
        self.spec = spec or QuadratureSpec()
        self.rule = None
        self.strikes = None

    def params(self, H, nu, lam, rho=CALIB_RHO):
        return ModelParams(alpha=H + 0.5, nu=nu, lam=lam, rho=rho, vbar=self.curve.v0, v0=self.curve.v0)

    def exponents(self, params, a):
        """psi(tau_i; a - i/2) for every maturity, shape (n_maturities, n_a)."""
        kernel = Kernel.for_params(params)
        sol = solve_riccati(params, kernel, self.grid, np.asarray(a) - 0.5j)
        return np.array([_psi_from_g(sol.g, self.grid, j, self.curve, kernel.alpha) for j in self.idx])

    def _integrand(self, params, strikes, w_refs):
        cache = {}

        def f(a):
            key = a.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = self.exponents(params, a)
            ps = cache[key]
            q = a * a + 0.25
            rows = []
            for i, ks in enumerate(strikes):
                diff = np.exp(-0.5 * q * w_refs[i]) - np.exp(ps[i])
                rows.append((np.exp(-1j * np.outer(ks, a)) * diff[None, :]).real / q)
            return np.vstack(rows)

        return f

    def prices(self, params, strikes):
        ps0 = self.exponents(params, np.array([0.0]))[:, 0]
        w_refs = -8.0 * ps0.real
        f = self._integrand(params, strikes, w_refs)
        if self.rule is None:
            a_max = _truncate_stepwise(f, self.spec.truncation_threshold)
            self.rule = lewis_rule(f, self.spec, a_max=a_max)
        corr = np.asarray(f(self.rule.nodes)) @ self.rule.weights
        out, row = [], 0
        for i, ks in enumerate(strikes):
            n = len(ks)
            out.append(bs_price(ks, w_refs[i]) + np.exp(ks / 2) * corr[row: row + n] / math.pi)
            row += n
        return out

    def smile(self, params, strikes):
        prices = self.prices(params, strikes)
        pts = []
        for t, ks, ps in zip(self.maturities, strikes, prices):
            for k, p in zip(ks, ps):
                pts.append(SmilePoint(float(k), implied_vol(float(p), float(k), t), t))
        return pts

    def atm_vols(self, params):
        ps0 = self.exponents(params, np.array([0.0]))[:, 0]
        strikes = [np.array([0.0])] * len(self.maturities)
        prices = self.prices(params, strikes)
        return [implied_vol(float(p[0]), 0.0, t) for p, t in zip(prices, self.maturities)], ps0


def strike_grid(sigma_atm, tau, n=11, width=2.0):
    """n log-strikes equally spaced on [-width sigma sqrt(tau), width sigma sqrt(tau)]."""
    half = width * sigma_atm * math.sqrt(tau)
    return np.linspace(-half, half, n)


def target_smiles(engine, H=0.10, nu=0.40, lam=0.0, rho=CALIB_RHO, n_strikes=11):
    """Reference smiles for one parameter set on the standard strike grid."""
    p = engine.params(H, nu, lam, rho)
    # ATM vols from a provisional rule; the final rule is built on the full grid
    engine.rule = None
    atm, _ = engine.atm_vols(p)
    strikes = [strike_grid(s, t, n_strikes) for s, t in zip(atm, engine.maturities)]
    engine.rule = None
    return engine.smile(p, strikes), strikes


def _rms(engine, params, strikes, target_iv):
    try:
        pts = engine.smile(params, strikes)
    except (DomainError, BracketError, RiccatiDivergenceError):
        return 1.0
    iv = np.array([p.iv for p in pts])
    return float(np.sqrt(np.mean((iv - target_iv) ** 2)))


def calibrate_smile(lambda_fixed, target, init=(0.2, 0.5), *, engine=None, rho=CALIB_RHO,
                    bounds=((0.01, 0.5), (0.05, 2.0)), max_restarts=4, xatol=1e-6, fatol=1e-10):
    """Fit (H, nu) at fixed lambda and rho to target smiles by RMS implied-vol error.

    ``target`` is a list of SmilePoint on the engine's maturities. Nelder-Mead
    with bounds, restarted from the incumbent until a restart no longer
    improves the objective.
    """
    engine = engine or SmileEngine()
    by_tau = {}
    for pt in target:
        by_tau.setdefault(pt.tau, []).append(pt)
    missing = [t for t in engine.maturities if not any(abs(t - u) < 1e-12 for u in by_tau)]
    if missing:
        raise DomainError(f"targets missing maturities {missing}")
    strikes, target_iv = [], []
    for t in engine.maturities:
        pts = next(v for u, v in by_tau.items() if abs(t - u) < 1e-12)
        strikes.append(np.array([p.k for p in pts]))
        target_iv.extend(p.iv for p in pts)
    target_iv = np.array(target_iv)

    def obj(x):
        H, nu = x
        if not (bounds[0][0] <= H <= bounds[0][1] and bounds[1][0] <= nu <= bounds[1][1]):
            return 1.0
        return _rms(engine, engine.params(H, nu, lambda_fixed, rho), strikes, target_iv)

    x = np.array(init, dtype=float)
    best = obj(x)
    iters = 0
    converged = False
    msg = ""
    for _ in range(max_restarts + 1):
        res = optimize.minimize(
            obj, x, method="Nelder-Mead", bounds=bounds,
            options={"xatol": xatol, "fatol": fatol, "maxiter": 400,
                     "initial_simplex": _simplex(x, bounds)},
        )
        iters += int(res.nit)
        msg = res.message
        improved = res.fun < best - fatol
        if res.fun <= best:
            x, best = res.x, float(res.fun)
        if not improved:
            converged = bool(res.success)
            break
    return CalibrationResult(float(lambda_fixed), float(x[0]), float(x[1]), best, iters, converged, str(msg))


def _simplex(x, bounds, step=(0.03, 0.08)):
    pts = [x.copy()]
    for i, s in enumerate(step):
        y = x.copy()
        y[i] = y[i] + s if y[i] + s <= bounds[i][1] else y[i] - s
        pts.append(y)
    return np.array(pts)
