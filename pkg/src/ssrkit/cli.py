"""Command-line front end: every command writes one deterministic CSV (or
key-value report) to --output or stdout.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import constants as C
from .discreteness import first_order, max_relative_error, ratio_power_law
from .errors import ConfigError, SSRError
from .forest import ssr_next_to_leading, ssr_second_order
from .model import Kernel, params_from_config, read_config
from .numerics import QuadratureSpec
from .smile import SmileEngine, calibrate_smile, implied_vol, lewis_call, strike_grid, target_smiles
from .ssr import (
    afv_evaluator,
    maturity_grid,
    ssr_afv,
    ssr_leading_order,
    ssr_short_time_limit,
    term_structure_afv,
    term_structure_heston,
)

# parameters used when no configuration is given: flat curve 0.025, H = 0.1
DEFAULTS = {"alpha": "0.6", "nu": "0.4", "rho": "-0.8", "lambda": "0", "v0": "0.025"}

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(x):
    return "%.17g" % x


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _floats(text, key):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"'{key}' must be a comma-separated list of numbers, got {text!r}", key=key) from None


class Run:
    """Merged configuration: defaults < config file < --set < explicit flags."""

    def __init__(self, args):
        cfg = dict(DEFAULTS)
        if args.config:
            file_cfg = read_config(args.config)
            if "H" in file_cfg or "alpha" in file_cfg:
                cfg.pop("alpha", None)
            cfg.update(file_cfg)
        for item in args.set or []:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", key=item)
            k, v = (s.strip() for s in item.split("=", 1))
            if k == "H":
                cfg.pop("alpha", None)
            cfg[k] = v
        for flag, key in (("H", "H"), ("nu", "nu"), ("rho", "rho"), ("lam", "lambda"), ("v0", "v0")):
            val = getattr(args, flag, None)
            if val is not None:
                if key == "H":
                    cfg.pop("alpha", None)
                cfg[key] = str(val)
        self.cfg = cfg
        self.args = args

    def num(self, key, default):
        if key not in self.cfg:
            return default
        try:
            return float(self.cfg[key])
        except ValueError:
            raise ConfigError(f"key '{key}' must be a number, got {self.cfg[key]!r}", key=key) from None

    def model(self):
        return params_from_config(self.cfg)

    def spec(self):
        try:
            return QuadratureSpec(
                abs_tol=self.num("quad.abs_tol", C.QUAD_ABS_TOL),
                rel_tol=self.num("quad.rel_tol", C.QUAD_REL_TOL),
                max_panels=int(self.num("quad.max_panels", C.QUAD_MAX_PANELS)),
                truncation_threshold=self.num("quad.truncation", C.QUAD_TRUNCATION),
            )
        except SSRError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid quadrature settings: {exc}", key="quad") from exc

    def steps_per_year(self):
        v = self.num("riccati.steps_per_year", C.RICCATI_STEPS_PER_YEAR)
        if v < 8:
            raise ConfigError("riccati.steps_per_year must be >= 8", key="riccati.steps_per_year")
        return v

    def taus(self):
        a = self.args
        tmin = a.tau_min if a.tau_min is not None else self.num("grid.min", C.TS_MIN_TAU)
        tmax = a.tau_max if a.tau_max is not None else self.num("grid.max", C.TS_MAX_TAU)
        n = a.n if a.n is not None else int(self.num("grid.n", C.TS_N))
        spacing = a.spacing or self.cfg.get("grid.spacing", "log")
        if not (0 < tmin < tmax) or n < 2:
            raise ConfigError("maturity grid needs 0 < min < max and n >= 2", key="grid")
        if spacing not in ("log", "linear"):
            raise ConfigError(f"grid.spacing must be log or linear, got {spacing!r}", key="grid.spacing")
        return maturity_grid(tmin, tmax, n, spacing)


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_ssr_afv(run):
    params, kernel, curve = run.model()
    ts = term_structure_afv(params, kernel, curve, run.taus(), run.spec(), steps_per_year=run.steps_per_year())
    return ts.to_csv()


def cmd_ssr_heston(run):
    params, _, _ = run.model()
    if params.alpha != 1.0:
        raise ConfigError("ssr-heston needs alpha = 1 (H = 0.5)", key="alpha")
    return term_structure_heston(params, run.taus(), run.spec()).to_csv()


def _forest(params, tau, order):
    cat = "heston_lambda0" if params.alpha == 1.0 else "rough_lambda0"
    f = ssr_second_order if order == "second" else ssr_next_to_leading
    return f(cat, params, tau)


def _flat_lambda0(params, curve):
    if params.lam != 0.0 or not curve.is_flat:
        raise ConfigError("forest formulas need lambda = 0 and a flat curve", key="lambda")


def cmd_ssr_forest(run):
    params, kernel, curve = run.model()
    _flat_lambda0(params, curve)
    params = params.with_(v0=curve.v0)
    rows = []
    for t in run.taus():
        num = ssr_afv(params, kernel, curve, float(t), run.spec()).ssr
        fr = _forest(params, float(t), run.args.order)
        rows.append((float(t), num, fr, fr / num - 1.0))
    return _csv(["tau", "ssr_numeric", "ssr_forest", "rel_diff"], rows)


def cmd_ssr_compare(run):
    params, _, curve = run.model()
    _flat_lambda0(params, curve)
    hs = _floats(run.args.hs, "--hs")
    rows = []
    for H in hs:
        p = params.with_(alpha=H + 0.5, v0=curve.v0)
        k = Kernel.for_params(p)
        for t in run.taus():
            num = ssr_afv(p, k, curve, float(t), run.spec()).ssr
            rows.append((float(t), H, num, _forest(p, float(t), run.args.order)))
    return _csv(["tau", "H", "ssr_numeric", "ssr_forest"], rows)


def cmd_smile(run):
    params, kernel, curve = run.model()
    mats = _floats(run.args.maturities, "--maturities")
    spec = run.spec()
    rows = []
    for t in mats:
        ev = afv_evaluator(params, kernel, curve, t)
        psi = lambda a, ev=ev: ev(a)[0]  # noqa: E731
        atm = implied_vol(lewis_call(psi, 0.0, spec), 0.0, t)
        ks = strike_grid(atm, t, run.args.strikes, run.args.width)
        prices = lewis_call(psi, ks, spec)
        for k, p in zip(ks, prices):
            rows.append((t, float(k), implied_vol(float(p), float(k), t)))
    return _csv(["tau", "k", "iv"], rows)


def cmd_calibrate(run):
    a = run.args
    engine = SmileEngine(xi=run.num("curve.level", 0.025))
    target, _ = target_smiles(engine, H=a.target_H, nu=a.target_nu, lam=0.0, rho=a.rho_fixed)
    res = calibrate_smile(a.lam_fixed, target, (a.init_H, a.init_nu), engine=engine, rho=a.rho_fixed)
    return res.report()


def cmd_discreteness(run):
    a = run.args
    rows = []
    for g in _floats(a.gamma, "--gamma"):
        for e in _floats(a.epsilon, "--epsilon"):
            try:
                r = ratio_power_law(g, e)
            except SSRError as exc:
                raise ConfigError(str(exc), key="--gamma/--epsilon") from exc
            rows.append((g, e, r, max_relative_error(e), first_order(g, e)))
    return _csv(["gamma", "epsilon", "ratio", "bound", "first_order"], rows)


def cmd_limits(run):
    params, kernel, curve = run.model()
    rows = []
    for t in run.taus():
        rows.append((float(t), ssr_leading_order(kernel, curve, float(t)),
                     ssr_short_time_limit(kernel, float(t)), params.alpha + 1.0))
    return _csv(["tau", "ssr_leading_order", "ssr_short_time_limit", "alpha_plus_one"], rows)


COMMANDS = {
    "ssr-afv": (cmd_ssr_afv, "SSR term structure of an affine forward variance model"),
    "ssr-heston": (cmd_ssr_heston, "SSR term structure of classical Heston (closed form)"),
    "ssr-forest": (cmd_ssr_forest, "numeric SSR next to the forest expansion"),
    "ssr-compare": (cmd_ssr_compare, "numeric and forest SSR for a sweep of H"),
    "smile": (cmd_smile, "implied-vol smiles from the Lewis formula"),
    "calibrate": (cmd_calibrate, "fit (H, nu) at fixed lambda to reference smiles"),
    "discreteness": (cmd_discreteness, "finite-window bias of the regression coefficient"),
    "limits": (cmd_limits, "leading-order and short-time SSR limits"),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="ssrkit", description="Skew-stickiness ratio engine.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--output", "-o", help="output path (default stdout)")
        if name not in ("discreteness", "calibrate"):
            p.add_argument("--H", type=float, help="Hurst exponent (sets alpha = H + 1/2)")
            p.add_argument("--nu", type=float)
            p.add_argument("--rho", type=float)
            p.add_argument("--lambda", dest="lam", type=float)
            p.add_argument("--v0", type=float)
            p.add_argument("--tau-min", type=float)
            p.add_argument("--tau-max", type=float)
            p.add_argument("--n", type=int, help="number of maturities")
            p.add_argument("--spacing", choices=["log", "linear"])
        if name in ("ssr-forest", "ssr-compare"):
            p.add_argument("--order", choices=["second", "next"], default="next")
        if name == "ssr-compare":
            p.add_argument("--hs", default="0.1,0.3,0.5", help="comma-separated H values")
        if name == "smile":
            p.add_argument("--maturities", default="0.08333333333333333,0.25,0.5,1")
            p.add_argument("--strikes", type=int, default=11)
            p.add_argument("--width", type=float, default=2.0, help="half-width in ATM standard deviations")
        if name == "calibrate":
            p.add_argument("--lambda", dest="lam_fixed", type=float, required=True)
            p.add_argument("--target-H", type=float, default=0.10)
            p.add_argument("--target-nu", type=float, default=0.40)
            p.add_argument("--rho-fixed", type=float, default=-0.65)
            p.add_argument("--init-H", type=float, default=0.2)
            p.add_argument("--init-nu", type=float, default=0.5)
        if name == "discreteness":
            p.add_argument("--gamma", default="0.5", help="comma-separated kernel exponents")
            p.add_argument("--epsilon", default="0.05", help="comma-separated window ratios delta/tau")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    try:
        out = fn(Run(args))
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"ssrkit: configuration error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SSRError as exc:
        print(f"ssrkit: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0

