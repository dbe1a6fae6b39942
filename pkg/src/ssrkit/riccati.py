"""Convolution Riccati equation of affine forward variance models.

For a Fourier argument a the function g(tau; a) solves

    g = -a(a+i)/2 + i rho a (kappa * g) + (kappa * g)^2 / 2,

where * is the convolution on [0, tau]. Writing h = kappa * g and
F(h) = -a(a+i)/2 + i rho a h + h^2/2, this is the Volterra equation
h = kappa * F(h), solved here by product integration: F is interpolated
piecewise linearly on a uniform grid and integrated exactly against the
kernel (fractional Adams predictor-corrector, one corrector pass).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import constants as C
from .errors import DomainError, RiccatiDivergenceError
from .model import Kernel, ModelParams, kernel_moments, kernel_power_moment


@dataclass(frozen=True)
class RiccatiGrid:
    """Uniform grid tau_j = j * tau_max / n_steps."""

    n_steps: int
    tau_max: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 8:
            raise DomainError(f"n_steps must be an integer >= 8, got {self.n_steps}")
        if not self.tau_max > 0:
            raise DomainError(f"tau_max must be positive, got {self.tau_max}")

    @classmethod
    def for_maturity(cls, tau_max, steps_per_year=C.RICCATI_STEPS_PER_YEAR, min_steps=C.RICCATI_MIN_STEPS):
        n = max(int(min_steps), int(math.ceil(steps_per_year * tau_max)))
        return cls(n, float(tau_max))

    @property
    def delta(self):
        return self.tau_max / self.n_steps

    @property
    def nodes(self):
        return np.arange(self.n_steps + 1) * self.delta

    def node_index(self, tau, tol=1e-9):
        """Index j with tau_j == tau (to relative tolerance), else None."""
        x = tau / self.delta
        j = int(round(x))
        if abs(x - j) <= tol * max(1.0, x) and 0 <= j <= self.n_steps:
            return j
        return None


@dataclass(frozen=True)
class RiccatiSolution:
    """g and kappa * g at the grid nodes.

    For an array of Fourier arguments the node axis comes first:
    g[j, i] = g(tau_j; a[i]).
    """

    a: np.ndarray
    g: np.ndarray
    kconv_g: np.ndarray
    grid: RiccatiGrid
    params: ModelParams
    kernel: Kernel

    @property
    def tau_max(self):
        return self.grid.tau_max


def _cell_moments(kernel, grid):
    p = kernel.params
    return _cell_moments_cached(kernel.kind, p.alpha, p.nu, p.lam, grid)


@lru_cache(maxsize=32)
def _cell_moments_cached(kind, alpha, nu, lam, grid):
    """Kernel moments over the cells [m delta, (m+1) delta].

    A_m = int kappa, B_m = int kappa(s) (s - m delta)/delta and
    Q_m = int kappa(s) (((m+1) delta - s)/delta)^alpha, the weight of the
    first-cell basis function (r/delta)^alpha.
    """
    kernel = Kernel(kind, ModelParams(alpha=alpha, nu=nu, lam=lam))
    d = grid.delta
    lo = np.arange(grid.n_steps) * d
    m0, m1 = kernel_moments(kernel, lo, lo + d)
    A = np.asarray(m0, dtype=float)
    B = np.asarray(m1, dtype=float) / d
    if kernel.alpha < 1.0:
        Q = np.asarray(kernel_power_moment(kernel, lo, lo + d, kernel.alpha)) / d**kernel.alpha
    else:
        Q = A - B
    for arr in (A, B, Q):
        arr.flags.writeable = False
    return A, B, Q


def solve_riccati(params: ModelParams, kernel: Kernel, grid: RiccatiGrid, a, implicit=True) -> RiccatiSolution:
    """Solve the convolution Riccati equation on ``grid`` for one or many a.

    Raises RiccatiDivergenceError if |g| exceeds the overflow guard, which
    signals an argument outside the strip where the characteristic function
    exists (or a grid far too coarse for |a|).
    """
    a_in = np.asarray(a, dtype=complex)
    av = np.atleast_1d(a_in).ravel()
    n = grid.n_steps
    A, B, Q = _cell_moments(kernel, grid)
    # weights of interior nodes by distance d = n - j (1 <= d <= n-1)
    W = np.empty(n)
    W[0] = A[0] - B[0]
    W[1:] = B[:-1] + A[1:] - B[1:]
    # on the first cell g behaves like g0 + c r^alpha: interpolate with
    # 1 - (r/delta)^alpha and (r/delta)^alpha instead of the hat functions
    w_first0 = A - Q  # weight of node 0 at step m is w_first0[m-1]
    w_first1 = np.empty(n)  # weight of node 1 at step m is w_first1[m-1]
    w_first1[0] = Q[0]
    w_first1[1:] = B[:-1] + Q[1:]
    rho = params.rho
    f0 = -0.5 * av * (av + 1j)
    lin = 1j * rho * av
    real_axis = av.real == 0.0

    F = np.empty((n + 1, av.size), dtype=complex)
    H = np.empty((n + 1, av.size), dtype=complex)
    F[0] = f0
    H[0] = 0.0
    Wrev = W[::-1]  # Wrev[k] = W[n-1-k]
    for m in range(1, n + 1):
        hp = A[m - 1::-1] @ F[:m]
        hist = w_first0[m - 1] * F[0]
        if m > 1:
            hist = hist + w_first1[m - 1] * F[1]
        if m > 2:
            # interior nodes j = 2..m-1 have distances m-2..1
            hist = hist + Wrev[n - m + 1: n - 1] @ F[2:m]
        w0 = w_first1[0] if m == 1 else W[0]
        if implicit:
            # h = hist + w0 F(h) is quadratic in h; take the root that tends to
            # hist + w0 f0 as w0 -> 0, written without cancellation
            b = 1.0 - w0 * lin
            c = hist + w0 * f0
            disc = b * b - 2.0 * w0 * c
            sq = np.sqrt(disc)
            sq = np.where((sq * np.conj(b)).real < 0, -sq, sq)
            h = 2.0 * c / (b + sq)
            # on the imaginary axis the problem is real: no real root means the
            # solution has blown up within this step
            h = np.where(real_axis & (disc.real < 0), np.inf, h)
        else:
            fp = f0 + lin * hp + 0.5 * hp * hp
            h = hist + w0 * fp
        with np.errstate(over="ignore", invalid="ignore"):
            fm = f0 + lin * h + 0.5 * h * h
        bad = ~np.isfinite(fm) | (np.abs(fm) > C.RICCATI_OVERFLOW)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise RiccatiDivergenceError(
                f"Riccati solution exceeded {C.RICCATI_OVERFLOW:g} at node {m} "
                f"(tau = {m * grid.delta:g}) for a = {av[i]}",
                node=m, tau=m * grid.delta, a=complex(av[i]),
            )
        H[m] = h
        F[m] = fm
    if a_in.ndim == 0:
        F, H = F[:, 0], H[:, 0]
        av = complex(a_in)
    return RiccatiSolution(a=av, g=F, kconv_g=H, grid=grid, params=params, kernel=kernel)


def kconv_at(sol: RiccatiSolution, kernel: Kernel, tau: float):
    """(kappa * g)(tau; a) for any tau in [0, tau_max].

    At grid nodes this is the stored value; in between, the piecewise-linear
    interpolant of g is convolved exactly with the kernel, the same rule the
    solver uses at the nodes.
    """
    grid = sol.grid
    if not 0.0 <= tau <= grid.tau_max * (1 + 1e-12):
        raise DomainError(f"tau = {tau} outside the solution grid [0, {grid.tau_max}]")
    j = grid.node_index(tau)
    if j is not None:
        return sol.kconv_g[j]
    d = grid.delta
    m = int(tau // d)  # tau lies in (t_m, t_{m+1})
    t = np.arange(m + 1) * d
    r_hi = np.minimum(t + d, tau)
    lo_s = tau - r_hi
    hi_s = tau - t
    m0, m1 = kernel_moments(kernel, lo_s, hi_s)
    # int kappa(s) (t_{j+1} - r) ds and int kappa(s) (r - t_j) ds with r = tau - s
    w_left = ((t + d - tau) * m0 + m1 + lo_s * m0) / d
    w_right = ((hi_s - lo_s) * m0 - m1) / d
    if kernel.alpha < 1.0:
        # first cell: same fractional basis as the solver
        q = kernel_power_moment(kernel, lo_s[0], hi_s[0], kernel.alpha) / d**kernel.alpha
        w_right[0] = q
        w_left[0] = m0[0] - q
    g = sol.g if sol.g.ndim == 2 else sol.g[:, None]
    out = w_left @ g[: m + 1] + w_right @ g[1: m + 2]
    return complex(out[0]) if sol.g.ndim == 1 else out


def g_integral_weights(grid: RiccatiGrid, j: int, alpha: float):
    """Weights w with sum_i w_i f(tau_i) ~ int_0^{tau_j} f for f ~ f0 + c tau^alpha near 0.

    Trapezoid rule whose first cell integrates f0 + c tau^alpha exactly.
    """
    d = grid.delta
    w = np.full(j + 1, d)
    w[0] = 0.5 * d
    w[-1] = 0.5 * d
    if j >= 1:
        w[0] = d * alpha / (alpha + 1.0)
        w[1] = d / (alpha + 1.0) + (0.5 * d if j >= 2 else 0.0)
        if j == 1:
            w[1] = d / (alpha + 1.0)
    return w
