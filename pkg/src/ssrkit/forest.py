"""Diamond-tree forest expansion of the cumulant generating function.

The exponent is expanded as psi = sum_l F_l(a) with

    F_0 = -a(a+i)/2 M,
    F_l = 1/2 sum_{j=0}^{l-2} (F_{l-2-j} <> F_j) + i a (X <> F_{l-1}),

where M = X <> X is the integrated forward variance. Only the finite
catalog of trees needed up to F_3 is supported. Coefficients are dense
polynomials in a (lowest degree first) with complex entries; all entries
are dyadic rationals, so products are exact in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as G

from .errors import DegenerateSkewError, UnsupportedConfigurationError

TREES = ("M", "MX", "MM", "MXX", "XMM", "MMX", "MXXX")

# root joins A <> B of catalog trees (unordered)
_JOIN = {
    frozenset(["X"]): "M",
    frozenset(["X", "M"]): "MX",
    frozenset(["M"]): "MM",
    frozenset(["X", "MX"]): "MXX",
    frozenset(["M", "MX"]): "XMM",
    frozenset(["X", "MM"]): "MMX",
    frozenset(["X", "MXX"]): "MXXX",
}


def diamond(t1, t2):
    """Catalog name of the tree t1 <> t2."""
    try:
        return _JOIN[frozenset([t1, t2])]
    except KeyError:
        raise UnsupportedConfigurationError(f"tree {t1} <> {t2} lies outside the catalog") from None


@dataclass(frozen=True)
class ForestTerm:
    level: int
    tree: str
    coeff: tuple  # polynomial coefficients in a, lowest degree first

    def __call__(self, a):
        return np.polynomial.polynomial.polyval(a, np.array(self.coeff, dtype=complex))


def _pmul(p, q):
    return tuple(complex(c) for c in np.polynomial.polynomial.polymul(np.array(p, complex), np.array(q, complex)))


def _padd(p, q):
    n = max(len(p), len(q))
    p = tuple(p) + (0j,) * (n - len(p))
    q = tuple(q) + (0j,) * (n - len(q))
    return tuple(x + y for x, y in zip(p, q))


def _combine(terms):
    """Merge terms with the same tree, keeping first-appearance order."""
    out = {}
    for tree, c in terms:
        out[tree] = _padd(out[tree], c) if tree in out else c
    return list(out.items())


def expand_forest(max_level: int = 3):
    """Forest terms F_0 .. F_max_level from the quadratic recursion."""
    if not 0 <= max_level <= 3:
        raise UnsupportedConfigurationError("forest catalog is closed at level 3")
    ia = (0j, 1j)  # the polynomial i a
    half = (0.5 + 0j,)
    levels = [[("M", (0j, -0.5j, -0.5 + 0j))]]  # -a(a+i)/2 = -(i/2) a - a^2/2
    for ell in range(1, max_level + 1):
        new = []
        for j in range(0, ell - 1):
            for t1, c1 in levels[ell - 2 - j]:
                for t2, c2 in levels[j]:
                    new.append((diamond(t1, t2), _pmul(half, _pmul(c1, c2))))
        for t, c in levels[ell - 1]:
            new.append((diamond("X", t), _pmul(ia, c)))
        levels.append(_combine(new))
    return [ForestTerm(ell, t, _trim(c)) for ell, lv in enumerate(levels) for t, c in lv]


def _trim(c):
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c)


def forest_constraints_check(terms) -> bool:
    """True iff every coefficient vanishes at a = 0 and a = -i (exactly)."""
    for t in terms:
        if t(0.0) != 0 or t(-1j) != 0:
            return False
    return True


# ----------------------------------------------------------------------------
# closed-form tree catalogs for a flat curve and lambda = 0
# ----------------------------------------------------------------------------

CATALOG_KINDS = ("heston_lambda0", "rough_lambda0")


@dataclass(frozen=True)
class DiamondTreeValue:
    tree: str
    value: float
    dxi_value: float | None


@dataclass(frozen=True)
class TreeCatalog:
    kind: str
    tau: float
    values: dict
    dxi: dict

    def __getitem__(self, name):
        return self.values[name]

    def entries(self):
        return [DiamondTreeValue(t, self.values[t], self.dxi.get(t)) for t in TREES]


def tree_values(catalog_kind, params, tau, curve=None):
    """All catalog trees and the D^xi images of M, MX, MM, MXX.

    Valid for a flat forward variance curve at level V = params.v0 with no
    mean reversion. ``heston_lambda0`` uses alpha = 1.
    """
    if catalog_kind not in CATALOG_KINDS:
        raise UnsupportedConfigurationError(f"unknown catalog {catalog_kind!r}")
    if params.lam != 0.0:
        raise UnsupportedConfigurationError("tree catalogs require lambda = 0")
    if curve is not None and not curve.is_flat:
        raise UnsupportedConfigurationError("tree catalogs require a flat forward variance curve")
    V = params.v0 if curve is None else curve.v0
    a = 1.0 if catalog_kind == "heston_lambda0" else params.alpha
    nu, rho, t = params.nu, params.rho, tau
    vals = {
        "M": V * t,
        "MX": rho * nu / G(2 + a) * V * t ** (a + 1),
        "MM": nu**2 / G(1 + a) ** 2 * V * t ** (2 * a + 1) / (2 * a + 1),
        "MXX": rho**2 * nu**2 / G(2 + 2 * a) * V * t ** (2 * a + 1),
        "XMM": rho * nu**3 / (G(1 + a) * G(1 + 2 * a)) * V * t ** (3 * a + 1) / (3 * a + 1),
        "MMX": rho * nu**3 * G(1 + 2 * a) / (G(1 + a) ** 2 * G(2 + 3 * a)) * V * t ** (3 * a + 1),
        "MXXX": rho**3 * nu**3 / G(2 + 3 * a) * V * t ** (3 * a + 1),
    }
    dxi = {
        "M": nu / G(1 + a) * t**a,
        "MX": rho * nu**2 / G(1 + 2 * a) * t ** (2 * a),
        "MM": nu**3 / G(1 + a) ** 2 * G(1 + 2 * a) / G(1 + 3 * a) * t ** (3 * a),
        "MXX": rho**2 * nu**3 / G(1 + 3 * a) * t ** (3 * a),
    }
    return TreeCatalog(catalog_kind, float(tau), vals, dxi)


def _check_rho(params):
    if params.rho == 0.0:
        raise DegenerateSkewError("rho = 0: the forest SSR denominator vanishes")


def ssr_second_order(catalog, params, tau, curve=None):
    """R = M rho D^xi(M + MX/2) / (MX + MXX)."""
    _check_rho(params)
    c = tree_values(catalog, params, tau, curve)
    v, d = c.values, c.dxi
    return v["M"] * params.rho * (d["M"] + 0.5 * d["MX"]) / (v["MX"] + v["MXX"])


def ssr_next_to_leading(catalog, params, tau, curve=None):
    """Next-to-leading forest SSR from trees up to level 3.

    Terms beyond the displayed ones are of relative order tau^(3 alpha - 1)
    or smaller and are dropped.
    """
    _check_rho(params)
    c = tree_values(catalog, params, tau, curve)
    v, d = c.values, c.dxi
    M, MX, MM, MXX = v["M"], v["MX"], v["MM"], v["MXX"]
    XMM, MMX, MXXX = v["XMM"], v["MMX"], v["MXXX"]
    DM, DMX, DMM, DMXX = d["M"], d["MX"], d["MM"], d["MXX"]
    num = (
        DM
        + 0.5 * DMX
        - DMM / (4 * M)
        - DMXX / M
        - MX * DM / (4 * M)
        + 3 * MX * DMX / (2 * M**2)
        + 3 * DM * MM / (8 * M**2)
        + 3 * DM * MXX / (2 * M**2)
        - 15 * DM * MX**2 / (8 * M**3)
    )
    den = (
        MX
        + MXX
        - 3 * MX**2 / (4 * M)
        - 105 * MX**3 / (24 * M**3)
        + 15 * MM * MX / (8 * M**2)
        + 15 * MX * MXX / (2 * M**2)
        - 3 * MMX / (4 * M)
        - 3 * XMM / (2 * M)
        - 3 * MXXX / M
    )
    return params.rho * M * num / den


def heston_lambda0_expansion(params, tau):
    """Rational small-tau expansion of the classical Heston SSR with lambda = 0."""
    nu, rho, V, t = params.nu, params.rho, params.v0, tau
    num = 1 + nu * rho * t / 8 + nu**2 * t / (24 * V) - rho**2 * nu**2 * t / (96 * V)
    den = 1 - rho * nu * t / 24 + nu**2 * t / (8 * V) - 3 * rho**2 * nu**2 * t / (32 * V)
    return 2 * num / den


def leading_limit(params):
    """tau -> 0 limit alpha + 1 = H + 3/2."""
    return params.alpha + 1.0

