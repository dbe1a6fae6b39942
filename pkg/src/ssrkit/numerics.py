"""Special functions, Lewis-type quadrature and bracketed root finding.

Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from . import constants as C
from .errors import BracketError, DomainError, QuadratureError

# ----------------------------------------------------------------------------
# Mittag-Leffler function on the non-positive real axis
# ----------------------------------------------------------------------------


def _series_log_peak(alpha, beta, y):
    """log of the largest term |x|^k / Gamma(alpha k + beta) of the power series."""
    if y == 0.0:
        return -special.gammaln(beta) if beta > 0 else 0.0
    kmax = int(3.0 * (y ** (1.0 / alpha) + 5.0) / alpha) + 20
    k = np.arange(kmax + 1)
    return float(np.max(k * math.log(y) - special.gammaln(alpha * k + beta)))


def _ml_series(alpha, beta, x):
    """Power series in double precision, vectorised.

    Returns the sum and the largest term magnitude; the ratio of the two
    bounds the cancellation error.
    """
    x = np.asarray(x, dtype=float)
    ymax = float(np.max(np.abs(x))) if x.size else 0.0
    n = 8
    while ymax > 0.0 and n <= 4096:
        last = (n - 1) * math.log(ymax) - special.gammaln(alpha * (n - 1) + beta)
        if last < math.log(1e-18):
            break
        n *= 2
    k = np.arange(n)
    terms = np.power(x[..., None], k) * special.rgamma(alpha * k + beta)
    return terms.sum(axis=-1), np.max(np.abs(terms), axis=-1)


def _ml_asymptotic(alpha, beta, x):
    """Algebraic asymptotic sum and its truncation-error estimate (x < 0, alpha < 1)."""
    k = np.arange(1, 200)
    inv = special.rgamma(beta - alpha * k)
    logmag = -k * math.log(-x) + np.log(np.abs(inv) + 1e-300)
    # truncate just before the smallest nonzero term
    nz = inv != 0.0
    idx = int(np.argmin(np.where(nz, logmag, np.inf)))
    terms = -np.power(x, -k[:idx].astype(float)) * inv[:idx]
    return float(math.fsum(terms)), float(math.exp(logmag[idx]))


@lru_cache(maxsize=64)
def _ml_coeffs(alpha, beta, dps, n):
    """1 / Gamma(alpha k + beta) for k < n at the given working precision."""
    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        return tuple(mpmath.rgamma(a * k + b) for k in range(n))


def _ml_mp(alpha, beta, x):
    """Power series in multiprecision, working precision sized to the cancellation."""
    y = -x
    log_peak = _series_log_peak(alpha, beta, y)
    # round precision up to a multiple of 10 digits so coefficient tables are shared
    dps = 30 + 10 * (int(max(log_peak, 0.0) / math.log(10.0)) // 10 + 1)
    kmin = int((y ** (1.0 / alpha)) / alpha) + 5
    n = 64
    while True:
        with mpmath.workdps(dps):
            coeffs = _ml_coeffs(alpha, beta, dps, n)
            xa = mpmath.mpf(x)
            tiny = mpmath.mpf(10) ** (-(dps - 5))
            s = mpmath.mpf(0)
            p = mpmath.mpf(1)
            for k, c in enumerate(coeffs):
                term = p * c
                s += term
                if k > kmin and abs(term) < tiny * max(abs(s), tiny):
                    return float(s)
                p *= xa
        n *= 2


def _ml_integral(alpha, beta, x):
    """Real-line integral representation, valid for 0 < alpha < 1, x < 0.

    For beta < 1 + alpha,
        E(x) = 1/(alpha pi) int_0^inf chi^((1-beta)/alpha) exp(-chi^(1/alpha))
               (chi sin(pi(1-beta)) - x sin(pi(1-beta+alpha)))
               / (chi^2 - 2 chi x cos(alpha pi) + x^2) dchi;
    larger beta is reduced with E_{a,b}(x) = (E_{a,b-a}(x) - 1/Gamma(b-a)) / x.
    """
    if beta >= 1.0 + alpha:
        return (_ml_integral(alpha, beta - alpha, x) - float(special.rgamma(beta - alpha))) / x
    s1 = math.sin(math.pi * (1.0 - beta))
    s2 = math.sin(math.pi * (1.0 - beta + alpha))
    c = math.cos(alpha * math.pi)
    inv = 1.0 / alpha

    def f(chi):
        return math.exp(-chi**inv) * (chi * s1 - x * s2) / (chi * chi - 2.0 * chi * x * c + x * x)

    # exp(-chi^(1/alpha)) < 1e-26 beyond the cut
    upper = 60.0**alpha
    e = (1.0 - beta) / alpha
    kw = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    # epsrel sits at the roundoff floor; QUADPACK may say so while the result is already converged
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if e == 0.0:
            val = integrate.quad(f, 0.0, upper, **kw)[0]
        else:
            val = integrate.quad(f, 0.0, upper, weight="alg", wvar=(e, 0.0), **kw)[0]
    return val / (alpha * math.pi)


def _ml_scalar(alpha, beta, x):
    if x == 0.0:
        return float(special.rgamma(beta))
    y = -x
    if alpha == 1.0 and beta == 1.0:
        return math.exp(x)
    if y <= _series_cutoff(alpha, beta):
        total, peak = _ml_series(alpha, beta, np.array([x]))
        if peak[0] <= C.ML_SERIES_MAX_TERM * abs(total[0]):
            return float(total[0])
    if alpha < 1.0 and y >= C.ML_ASYMPTOTIC_MIN_ABS_X:
        s, err = _ml_asymptotic(alpha, beta, x)
        # the algebraic expansion omits terms of size exp(-|cos(pi/alpha)| y^(1/alpha))
        hidden = abs(math.cos(math.pi / alpha)) * y ** (1.0 / alpha)
        if s != 0.0 and err <= 1e-15 * abs(s) and hidden >= 40.0 - math.log(abs(s)):
            return s
    if alpha < 1.0:
        return _ml_integral(alpha, beta, x)
    return _ml_mp(alpha, beta, x)


def mittag_leffler(alpha, beta, x):
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(x) for real x <= 0.

    Small arguments use the power series in double precision as long as its
    largest term stays within a factor 1e3 of the sum; large ones use the
    algebraic asymptotic expansion when both its optimal truncation error and
    the exponentially small terms it omits are below double precision. The
    region in between uses a real-line integral representation (alpha < 1)
    or a multiprecision series (alpha = 1). Accepts scalars
    or arrays.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa > 0.0) or not np.all(np.isfinite(xa)):
        raise DomainError("Mittag-Leffler evaluation supports finite x <= 0 only")
    flat = xa.ravel()
    out = np.empty_like(flat)
    if alpha == 1.0 and beta == 1.0:
        out[:] = np.exp(flat)
        return out.reshape(xa.shape) if xa.ndim else float(out[0])
    # vectorised series branch for arguments small enough for all methods
    y = -flat
    cut = _series_cutoff(alpha, beta)
    small = y <= cut
    if np.any(small):
        total, peak = _ml_series(alpha, beta, flat[small])
        ok = peak <= C.ML_SERIES_MAX_TERM * np.abs(total)
        idx = np.flatnonzero(small)
        out[idx[ok]] = total[ok]
        small[idx[~ok]] = False
    for i in np.flatnonzero(~small):
        out[i] = _ml_scalar(alpha, beta, float(flat[i]))
    return out.reshape(xa.shape) if xa.ndim else float(out[0])


@lru_cache(maxsize=256)
def _series_cutoff(alpha, beta):
    """Largest |x| for which the double-precision series is attempted."""
    lo, hi = 0.0, 64.0
    target = math.log(100.0 * C.ML_SERIES_MAX_TERM)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _series_log_peak(alpha, beta, mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def mittag_leffler_2p(alpha, x):
    """E_{alpha,alpha}(x), the function appearing in the rough Heston kernel."""
    return mittag_leffler(alpha, alpha, x)


# ----------------------------------------------------------------------------
# Adaptive Gauss-Legendre quadrature on [0, a_max]
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = C.QUAD_ABS_TOL
    rel_tol: float = C.QUAD_REL_TOL
    max_panels: int = C.QUAD_MAX_PANELS
    truncation_threshold: float = C.QUAD_TRUNCATION

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.truncation_threshold > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_panels < 1:
            raise DomainError("max_panels must be >= 1")


@dataclass(frozen=True)
class LewisRule:
    """Frozen composite rule (nodes and weights) produced by an adaptive run.

    Reusing one rule across nearby integrands (bumped parameters, several
    strikes) keeps their discretisation errors correlated.
    """

    nodes: np.ndarray
    weights: np.ndarray
    a_max: float
    error: float

    def integrate(self, f):
        return np.asarray(f(self.nodes)) @ self.weights


@lru_cache(maxsize=16)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


_PROBES = 0.25 * 2.0 ** np.arange(0, 19)  # 0.25 ... 65536


def _as_2d(vals, n):
    v = np.asarray(vals)
    if v.ndim == 1:
        v = v[None, :]
    if v.shape[-1] != n:
        raise ValueError("integrand must return one value per node")
    return v


def find_truncation(f, threshold, probes=_PROBES):
    """Smallest probe point past which every probed |f| is below threshold."""
    pts = np.concatenate([probes, 1.37 * probes])
    vals = _as_2d(f(pts), pts.size)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand returned non-finite values while probing its tail")
    mag = np.max(np.abs(vals), axis=0)
    mag = np.maximum(mag[: probes.size], mag[probes.size:])
    above = np.flatnonzero(mag >= threshold)
    if above.size == 0:
        return float(probes[0])
    last = above[-1]
    if last == probes.size - 1:
        raise QuadratureError(
            f"integrand still above {threshold:g} at a = {probes[-1]:g}; no truncation point found"
        )
    return float(probes[last + 1])


def lewis_rule(f, spec=None, *, a_max=None):
    """Adaptively build a composite Gauss-Legendre rule for f on [0, a_max].

    f is vectorised: it takes a 1-D array of nodes and returns either an
    array of the same length or a 2-D array (components x nodes). All panels
    created in one refinement round are evaluated in a single call, so an
    expensive integrand (one Riccati solve per node) is batched.

    The error of a panel is the difference between the n-point rule on the
    panel and the n-point rule on its two halves.
    """
    spec = spec or QuadratureSpec()
    if a_max is None:
        a_max = find_truncation(f, spec.truncation_threshold)
    xg, wg = _leggauss(C.QUAD_GL_ORDER)
    n = xg.size

    # initial panels: geometric breakpoints up to a_max
    bps = [0.0] + [p for p in _PROBES if p < a_max] + [a_max]
    lo = np.array(bps[:-1])
    hi = np.array(bps[1:])

    def nodes_of(l, h):
        c = 0.5 * (l + h)
        r = 0.5 * (h - l)
        return (c[:, None] + r[:, None] * xg[None, :]).ravel(), (r[:, None] * wg[None, :])

    # coarse values for the initial panels
    xs, ws = nodes_of(lo, hi)
    v = _as_2d(f(xs), xs.size).reshape(-1, lo.size, n)
    coarse = np.einsum("cpn,pn->cp", v, ws)

    done_lo, done_hi, done_val, done_err = [], [], [], []
    ncomp = v.shape[0]
    total_width = a_max
    while True:
        mid = 0.5 * (lo + hi)
        l2 = np.concatenate([lo, mid])
        h2 = np.concatenate([mid, hi])
        xs, ws = nodes_of(l2, h2)
        v = _as_2d(f(xs), xs.size).reshape(ncomp, l2.size, n)
        halves = np.einsum("cpn,pn->cp", v, ws)
        if not np.all(np.isfinite(halves)):
            raise QuadratureError("integrand returned non-finite values")
        m = lo.size
        left, right = halves[:, :m], halves[:, m:]
        fine = left + right
        err = np.abs(fine - coarse)

        all_val = np.concatenate([np.array(done_val).reshape(-1, ncomp).T, fine], axis=1) if done_val else fine
        all_err = np.concatenate([np.array(done_err).reshape(-1, ncomp).T, err], axis=1) if done_err else err
        total = all_val.sum(axis=1)
        total_err = all_err.sum(axis=1)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(total_err <= tol):
            done_lo.extend(lo)
            done_hi.extend(hi)
            done_val.extend(fine.T)
            done_err.extend(err.T)
            break
        # error-density criterion; always split the worst panel
        share = tol[:, None] * (hi - lo)[None, :] / total_width
        split = np.any(err > share, axis=0)
        split[np.argmax(np.max(err / tol[:, None], axis=0))] = True
        n_panels = len(done_lo) + m + int(split.sum())
        if n_panels > spec.max_panels:
            raise QuadratureError(
                f"no convergence within {spec.max_panels} panels",
                value=total if ncomp > 1 else float(total[0]),
                error=total_err if ncomp > 1 else float(total_err[0]),
            )
        keep = ~split
        done_lo.extend(lo[keep])
        done_hi.extend(hi[keep])
        done_val.extend(fine[:, keep].T)
        done_err.extend(err[:, keep].T)
        lo = np.concatenate([lo[split], mid[split]])
        hi = np.concatenate([mid[split], hi[split]])
        coarse = np.concatenate([left[:, split], right[:, split]], axis=1)

    lo = np.array(done_lo)
    hi = np.array(done_hi)
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    mid = 0.5 * (lo + hi)
    xs, ws = nodes_of(np.concatenate([lo, mid]), np.concatenate([mid, hi]))
    err_total = float(np.max(np.array(done_err).sum(axis=0)))
    return LewisRule(nodes=xs, weights=ws.ravel(), a_max=float(a_max), error=err_total)


def integrate_lewis(f, spec=None, *, a_max=None, return_rule=False):
    """Integrate a rapidly decaying integrand over the positive half line.

    The upper limit is the first probe point beyond which |f| stays under
    ``spec.truncation_threshold``; the interval is then refined adaptively.
    Returns a float for scalar integrands, an array for vector-valued ones.
    """
    rule = lewis_rule(f, spec, a_max=a_max)
    raw = np.asarray(f(rule.nodes))
    vals = _as_2d(raw, rule.nodes.size) @ rule.weights
    out = float(vals[0]) if raw.ndim == 1 else vals
    return (out, rule) if return_rule else out


# ----------------------------------------------------------------------------
# Root finding
# ----------------------------------------------------------------------------


def find_root_bracketed(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a continuous f on [lo, hi] given a sign change at the ends."""
    flo, fhi = f(lo), f(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise BracketError(f"f is not finite at the bracket ends ({flo}, {fhi})")
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0.0:
        raise BracketError(f"[{lo}, {hi}] does not bracket a root: f = ({flo:g}, {fhi:g})")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
