"""Model parameters, volatility kernels and forward variance curves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError
from .numerics import _leggauss, mittag_leffler


@dataclass(frozen=True)
class ModelParams:
    """Parameters of an affine forward variance model.

    ``alpha`` is the kernel exponent (alpha = H + 1/2), ``nu`` the vol-of-vol,
    ``lam`` the mean reversion, ``rho`` the spot-vol correlation, ``vbar`` the
    long-run variance and ``v0`` the instantaneous variance.
    """

    alpha: float
    nu: float
    lam: float = 0.0
    rho: float = 0.0
    vbar: float = 0.0
    v0: float = 0.04

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (1/2, 1], got {self.alpha}")
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if self.lam < 0:
            raise DomainError(f"lambda must be non-negative, got {self.lam}")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.vbar < 0:
            raise DomainError(f"vbar must be non-negative, got {self.vbar}")
        if not self.v0 > 0:
            raise DomainError(f"v0 must be positive, got {self.v0}")

    @classmethod
    def from_hurst(cls, H, **kw):
        return cls(alpha=H + 0.5, **kw)

    @property
    def hurst(self):
        return self.alpha - 0.5

    def with_(self, **kw):
        return replace(self, **kw)


KERNEL_KINDS = ("power_law", "mittag_leffler", "exponential")


@dataclass(frozen=True)
class Kernel:
    """Volatility kernel kappa(tau) built from a parameter bundle.

    power_law:       nu tau^(alpha-1) / Gamma(alpha)
    mittag_leffler:  nu tau^(alpha-1) E_{alpha,alpha}(-lam tau^alpha)
    exponential:     nu exp(-lam tau)       (classical Heston)
    """

    kind: str
    params: ModelParams

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DomainError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def for_params(cls, params):
        """The rough Heston kernel for these parameters, in its simplest exact form."""
        if params.lam == 0.0:
            return cls("power_law", params)
        if params.alpha == 1.0:
            return cls("exponential", params)
        return cls("mittag_leffler", params)

    @property
    def alpha(self):
        return 1.0 if self.kind == "exponential" else self.params.alpha


def kernel_eval(k: Kernel, tau):
    """kappa(tau) for tau > 0."""
    t = np.asarray(tau, dtype=float)
    if np.any(t <= 0):
        raise DomainError("kernel is evaluated at tau > 0 only")
    p = k.params
    if k.kind == "power_law":
        out = p.nu * t ** (p.alpha - 1.0) / special.gamma(p.alpha)
    elif k.kind == "exponential":
        out = p.nu * np.exp(-p.lam * t)
    else:
        out = p.nu * t ** (p.alpha - 1.0) * mittag_leffler(p.alpha, p.alpha, -p.lam * t**p.alpha)
    return float(out) if np.ndim(out) == 0 else out


def _ml_cumulative(p, t, power):
    """int_0^t r^power kappa(r) dr for the Mittag-Leffler kernel, power in {0, 1}."""
    t = np.asarray(t, dtype=float)
    x = -p.lam * t**p.alpha
    e1 = mittag_leffler(p.alpha, p.alpha + 1.0, x)
    if power == 0:
        return p.nu * t**p.alpha * e1
    e2 = mittag_leffler(p.alpha, p.alpha + 2.0, x)
    return p.nu * t ** (p.alpha + 1.0) * (e1 - e2)


def kernel_cumulative(k: Kernel, tau):
    """int_0^tau kappa(s) ds."""
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise DomainError("cumulative kernel needs tau >= 0")
    p = k.params
    if k.kind == "power_law":
        out = p.nu * t**p.alpha / special.gamma(p.alpha + 1.0)
    elif k.kind == "exponential":
        out = p.nu * t * _phi1(p.lam * t)
    else:
        out = _ml_cumulative(p, t, 0)
    return float(out) if np.ndim(out) == 0 else out


def kernel_double_integral(k: Kernel, tau):
    """int_0^tau ktilde(u) du = int_0^tau kappa(r) (tau - r) dr."""
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise DomainError("double integral needs tau >= 0")
    p = k.params
    if k.kind == "power_law":
        out = p.nu * t ** (p.alpha + 1.0) / special.gamma(p.alpha + 2.0)
    else:
        m0, m1 = kernel_moments(k, np.zeros_like(t), t)
        out = t * m0 - m1
    return float(out) if np.ndim(out) == 0 else out


def _phi1(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(x == 0.0, 1.0, -np.expm1(-x) / np.where(x == 0.0, 1.0, x))


def _phi2(x):
    # int_0^1 exp(-x s) s ds
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    xs = np.where(small, x, 0.0)
    ser = sum((-xs) ** j / (math.factorial(j) * (j + 2)) for j in range(14))
    xl = np.where(small, 1.0, x)
    big = (1.0 - np.exp(-xl) * (1.0 + xl)) / xl**2
    return np.where(small, ser, big)


def kernel_moments(k: Kernel, lo, hi):
    """Cell moments (int kappa, int kappa(r) (r - lo) dr) over [lo, hi].

    These are the building blocks of the product-integration weights used by
    the Riccati solver.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo < 0) or np.any(hi < lo):
        raise DomainError("moments need 0 <= lo <= hi")
    p = k.params
    w = hi - lo
    if k.kind == "power_law":
        a = p.alpha
        m0 = p.nu * (hi**a - lo**a) / special.gamma(a + 1.0)
        m1 = p.nu / special.gamma(a) * ((hi ** (a + 1) - lo ** (a + 1)) / (a + 1) - lo * (hi**a - lo**a) / a)
        return m0, m1
    if k.kind == "exponential":
        base = p.nu * np.exp(-p.lam * lo)
        return base * w * _phi1(p.lam * w), base * w**2 * _phi2(p.lam * w)
    # Mittag-Leffler: exact cumulative form near the singularity, Gauss-Legendre elsewhere
    lo_b, hi_b, w_b = np.broadcast_arrays(lo, hi, w)
    m0 = np.empty(lo_b.shape)
    m1 = np.empty(lo_b.shape)
    near = lo_b < w_b
    if np.any(near):
        l, h = lo_b[near], hi_b[near]
        c0h, c0l = _ml_cumulative(p, h, 0), _ml_cumulative(p, l, 0)
        c1h, c1l = _ml_cumulative(p, h, 1), _ml_cumulative(p, l, 1)
        m0[near] = c0h - c0l
        m1[near] = (c1h - c1l) - l * (c0h - c0l)
    far = ~near
    if np.any(far):
        xg, wg = _leggauss(16)
        l, h = lo_b[far], hi_b[far]
        half = 0.5 * (h - l)
        r = 0.5 * (h + l)[:, None] + half[:, None] * xg[None, :]
        kv = kernel_eval(k, r)
        m0[far] = half * (kv @ wg)
        m1[far] = half * ((kv * (r - l[:, None])) @ wg)
    return m0, m1


@lru_cache(maxsize=32)
def _jacobi(n, a, b):
    return special.roots_jacobi(n, a, b)


def kernel_power_moment(k: Kernel, lo, hi, p, n_nodes=24):
    """int_lo^hi kappa(s) (hi - s)^p ds by Gauss-Jacobi quadrature.

    The factor (hi - s)^p goes into the weight. Cells starting at 0, where the
    kernel is singular, use the exact Mittag-Leffler form instead.
    """
    lo_b, hi_b = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    out = np.empty(lo_b.shape)
    half = 0.5 * (hi_b - lo_b)
    a = k.alpha
    at0 = (lo_b == 0.0) & (k.kind != "exponential")
    if np.any(at0):
        # termwise Beta integrals of the series give nu Gamma(p+1) t^(a+p) E_{a,a+p+1}(-lam t^a)
        t = hi_b[at0]
        pp = k.params
        lam = pp.lam if k.kind == "mittag_leffler" else 0.0
        out[at0] = pp.nu * special.gamma(p + 1.0) * t ** (a + p) * mittag_leffler(a, a + p + 1.0, -lam * t**a)
    rest = ~at0
    if np.any(rest):
        x, w = _jacobi(n_nodes, p, 0.0)
        h = half[rest]
        s = lo_b[rest][:, None] + h[:, None] * (1.0 + x[None, :])
        out[rest] = h ** (p + 1.0) * (kernel_eval(k, np.maximum(s, 1e-300)) @ w)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# forward variance curves
# ----------------------------------------------------------------------------

CURVE_KINDS = ("flat", "exponential_decay", "tabulated")


@dataclass(frozen=True)
class ForwardVarianceCurve:
    """Forward variance xi_t(t + u) as a function of the time ahead u.

    exponential_decay is (v0 - vbar) exp(-lam u) + vbar. Tabulated curves are
    piecewise constant: the value paired with maturity T_i applies on
    (T_{i-1}, T_i].
    """

    kind: str
    v0: float
    vbar: float = 0.0
    lam: float = 0.0
    table: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if self.kind == "tabulated":
            if not self.table:
                raise DomainError("tabulated curve needs a table")
            ts = [float(t) for t, _ in self.table]
            if ts[0] <= 0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise DomainError("tabulated maturities must be positive and strictly increasing")
            if any(x <= 0 for _, x in self.table):
                raise DomainError("tabulated forward variances must be positive")
        elif self.kind == "flat":
            if not self.v0 > 0:
                raise DomainError("flat curve level must be positive")
        else:
            if not (self.v0 > 0 and self.vbar > 0 and self.lam >= 0):
                raise DomainError("exponential_decay needs v0 > 0, vbar > 0, lam >= 0")

    @classmethod
    def flat(cls, level):
        return cls("flat", v0=float(level), vbar=float(level))

    @classmethod
    def exponential_decay(cls, v0, vbar, lam):
        return cls("exponential_decay", v0=float(v0), vbar=float(vbar), lam=float(lam))

    @classmethod
    def tabulated(cls, pairs):
        pairs = tuple((float(t), float(x)) for t, x in pairs)
        return cls("tabulated", v0=pairs[0][1], table=pairs)

    @property
    def is_flat(self):
        return self.kind == "flat" or (self.kind == "exponential_decay" and self.v0 == self.vbar)

    def scaled(self, c):
        """Same shape, level multiplied by c."""
        if self.kind == "tabulated":
            return ForwardVarianceCurve.tabulated([(t, c * x) for t, x in self.table])
        return replace(self, v0=c * self.v0, vbar=c * self.vbar)

    def shifted(self, t0):
        """The curve seen from t0 years later, assuming it rolls down unchanged."""
        if t0 < 0:
            raise DomainError("shift must be non-negative")
        if self.kind == "flat":
            return self
        if self.kind == "exponential_decay":
            return replace(self, v0=float(curve_eval(self, t0)))
        rows = [(t - t0, x) for t, x in self.table if t > t0]
        if not rows:
            raise DomainError("shift moves past the end of the table")
        return ForwardVarianceCurve.tabulated(rows)


def curve_eval(c: ForwardVarianceCurve, time_ahead):
    """xi_t(t + u)."""
    u = np.asarray(time_ahead, dtype=float)
    if np.any(u < 0):
        raise DomainError("curve evaluated at negative time ahead")
    if c.kind == "flat":
        out = np.full_like(u, c.v0)
    elif c.kind == "exponential_decay":
        out = c.vbar + (c.v0 - c.vbar) * np.exp(-c.lam * u)
    else:
        ts = np.array([t for t, _ in c.table])
        xs = np.array([x for _, x in c.table])
        if np.any(u > ts[-1] * (1 + 1e-12)):
            raise DomainError(f"curve table ends at {ts[-1]}; no extrapolation")
        out = xs[np.minimum(np.searchsorted(ts, u, side="left"), ts.size - 1)]
    return float(out) if np.ndim(out) == 0 else out


def curve_integral(c: ForwardVarianceCurve, tau):
    """int_0^tau xi_t(t + u) du."""
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise DomainError("curve integral needs tau >= 0")
    if c.kind == "flat":
        out = c.v0 * t
    elif c.kind == "exponential_decay":
        decay = t * _phi1(c.lam * t)
        out = c.vbar * t + (c.v0 - c.vbar) * decay
    else:
        ts = np.array([0.0] + [t_ for t_, _ in c.table])
        xs = np.array([x for _, x in c.table])
        if np.any(t > ts[-1] * (1 + 1e-12)):
            raise DomainError(f"curve table ends at {ts[-1]}; no extrapolation")
        seg = np.clip(t[..., None] - ts[None, :-1], 0.0, np.diff(ts)[None, :]) if t.ndim else np.clip(
            t - ts[:-1], 0.0, np.diff(ts))
        out = seg @ xs
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# flat key-value configuration
# ----------------------------------------------------------------------------


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys may be dotted."""
    cfg = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist", key=None)
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw!r}", key=None)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{n}: empty key", key=None)
        cfg[key] = value
    cfg["__dir__"] = str(path.parent)
    return cfg


def _num(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key '{key}'", key=key)
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"key '{key}' must be a number, got {cfg[key]!r}", key=key) from None


def read_curve_table(path):
    """CSV with two columns (maturity, xi); a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ConfigError(f"bad row in curve table {path}: {rec}", key="curve.table") from None
    return rows


def params_from_config(cfg):
    """Build (ModelParams, Kernel, ForwardVarianceCurve) from a flat key-value mapping.

    Keys: alpha (or H), nu, lambda, rho, vbar, v0, kernel, curve.kind,
    curve.lambda, curve.level, curve.table.
    """
    try:
        if "alpha" in cfg:
            alpha = _num(cfg, "alpha")
        elif "H" in cfg:
            alpha = _num(cfg, "H") + 0.5
        else:
            raise ConfigError("missing required key 'alpha'", key="alpha")
        v0 = _num(cfg, "v0")
        params = ModelParams(
            alpha=alpha,
            nu=_num(cfg, "nu"),
            lam=_num(cfg, "lambda", 0.0),
            rho=_num(cfg, "rho", 0.0),
            vbar=_num(cfg, "vbar", v0),
            v0=v0,
        )
    except DomainError as exc:
        raise ConfigError(f"invalid model parameter: {exc}", key=None) from exc

    kind = cfg.get("kernel")
    try:
        kernel = Kernel(kind, params) if kind else Kernel.for_params(params)
    except DomainError as exc:
        raise ConfigError(str(exc), key="kernel") from exc

    ckind = cfg.get("curve.kind", "flat")
    try:
        if ckind == "flat":
            curve = ForwardVarianceCurve.flat(_num(cfg, "curve.level", params.v0))
        elif ckind == "exponential_decay":
            curve = ForwardVarianceCurve.exponential_decay(
                params.v0, params.vbar, _num(cfg, "curve.lambda", params.lam))
        elif ckind == "tabulated":
            if "curve.table" not in cfg:
                raise ConfigError("tabulated curve needs 'curve.table'", key="curve.table")
            tpath = Path(cfg["curve.table"])
            if not tpath.is_absolute():
                tpath = Path(cfg.get("__dir__", ".")) / tpath
            if not tpath.exists():
                raise ConfigError(f"curve table {tpath} does not exist", key="curve.table")
            curve = ForwardVarianceCurve.tabulated(read_curve_table(tpath))
        else:
            raise ConfigError(f"unknown curve.kind {ckind!r}", key="curve.kind")
    except DomainError as exc:
        raise ConfigError(f"invalid curve: {exc}", key="curve.kind") from exc
    return params, kernel, curve
