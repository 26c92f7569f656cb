"""Command-line front end: solve | simulate | verify.

Model and numerics are described by an INI config file; results are
written as CSV tables (floats at full precision, %.17g) and JSON
metadata into an output directory taken from --out, the TCMERTON_OUT
environment variable, or the [outputs] section, in that order.
"""

import argparse
import configparser
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import pipeline
from .errors import TCMertonError
from .grids import Grid
from .model import (CRRAUtility, ExponentialDiscount, HyperbolicDiscount,
                    MarketModel, MixedPowerUtility,
                    PseudoExponentialDiscount)
from .montecarlo import estimate_J, simulate_wealth
from .strategy import value_function
from .verify import full_report

FLOAT_FMT = "%.17g"

_SCHEMA = {
    "market": {"r", "mu", "sigma", "T"},
    "discount": {"kind", "rho0", "alpha", "beta", "weights", "rates"},
    "utility": {"kind", "gamma", "alpha", "gamma1", "gamma2"},
    "grid": {"y_min", "y_max", "n_t", "n_y"},
    "solver": {"tol", "max_iter", "damping", "boundary"},
    "mc": {"n_paths", "n_steps", "seed", "antithetic", "record_stride"},
    "outputs": {"dir"},
}


class ConfigError(TCMertonError):
    pass


@dataclass
class RunConfig:
    market: MarketModel
    discount: object
    utility: object
    grid: Grid
    tol: float = 1e-8
    max_iter: int = 50
    damping: float = 1.0
    boundary: str = "exp"
    n_paths: int = 20000
    n_steps: int = 400
    seed: int = 0
    antithetic: bool = True
    record_stride: int = 10
    out_dir: str = None

    @classmethod
    def from_file(cls, path):
        cp = configparser.ConfigParser()
        try:
            read = cp.read(path)
        except configparser.Error as exc:
            raise ConfigError("malformed config file %s: %s"
                              % (path, exc)) from exc
        if not read:
            raise ConfigError("config file not found: %s" % path)
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError("unknown config section [%s]" % section)
            unknown = set(cp[section]) - {k.lower() for k in _SCHEMA[section]}
            if unknown:
                raise ConfigError("unknown key(s) %s in section [%s]"
                                  % (sorted(unknown), section))
        for required in ("market", "discount", "utility", "grid"):
            if required not in cp:
                raise ConfigError("missing config section [%s]" % required)

        mk = cp["market"]
        market = MarketModel(r=mk.getfloat("r"), mu=mk.getfloat("mu"),
                             sigma=mk.getfloat("sigma"), T=mk.getfloat("T"))

        dc = cp["discount"]
        kind = dc.get("kind", "exponential").lower()
        if kind == "exponential":
            discount = ExponentialDiscount(rho0=dc.getfloat("rho0"))
        elif kind == "hyperbolic":
            discount = HyperbolicDiscount(alpha=dc.getfloat("alpha"),
                                          beta=dc.getfloat("beta"))
        elif kind == "pseudo_exponential":
            w = tuple(float(v) for v in dc.get("weights").split(","))
            r = tuple(float(v) for v in dc.get("rates").split(","))
            discount = PseudoExponentialDiscount(weights=w, rates=r)
        else:
            raise ConfigError("unknown discount kind %r" % kind)

        ut = cp["utility"]
        ukind = ut.get("kind", "crra").lower()
        if ukind == "crra":
            utility = CRRAUtility(gamma=ut.getfloat("gamma"))
        elif ukind == "mixed_power":
            utility = MixedPowerUtility(alpha=ut.getfloat("alpha"),
                                        gamma1=ut.getfloat("gamma1"),
                                        gamma2=ut.getfloat("gamma2"))
        else:
            raise ConfigError("unknown utility kind %r" % ukind)

        gr = cp["grid"]
        grid = Grid.regular(market.T, gr.getfloat("y_min"),
                            gr.getfloat("y_max"), gr.getint("n_t"),
                            gr.getint("n_y"))

        kw = {}
        if "solver" in cp:
            sv = cp["solver"]
            kw["tol"] = sv.getfloat("tol", 1e-8)
            kw["max_iter"] = sv.getint("max_iter", 50)
            kw["damping"] = sv.getfloat("damping", 1.0)
            kw["boundary"] = sv.get("boundary", "exp")
        if "mc" in cp:
            mc = cp["mc"]
            kw["n_paths"] = mc.getint("n_paths", 20000)
            kw["n_steps"] = mc.getint("n_steps", 400)
            kw["seed"] = mc.getint("seed", 0)
            kw["antithetic"] = mc.getboolean("antithetic", True)
            kw["record_stride"] = mc.getint("record_stride", 10)
        if "outputs" in cp:
            kw["out_dir"] = cp["outputs"].get("dir")
        return cls(market, discount, utility, grid, **kw)


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _fmt(x):
    return FLOAT_FMT % float(x)


def write_field_csv(path, grid, values, name):
    with open(path, "w") as f:
        f.write("t,y,%s\n" % name)
        for i, t in enumerate(grid.t_nodes):
            for j, y in enumerate(grid.y_nodes):
                f.write("%s,%s,%s\n" % (_fmt(t), _fmt(y),
                                        _fmt(values[i, j])))


def read_field_csv(path):
    """Read a t,y,value table back into (t_nodes, y_nodes, values)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    t = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    vals = data[:, 2].reshape(len(t), len(y))
    return t, y, vals


def write_strategy_csv(path, result):
    g = result.grid
    with open(path, "w") as f:
        f.write("t,y,pbar,pi_star,c_star\n")
        for i, t in enumerate(g.t_nodes):
            for j, y in enumerate(g.y_nodes):
                f.write("%s,%s,%s,%s,%s\n" % (
                    _fmt(t), _fmt(y), _fmt(result.pbar.values[i, j]),
                    _fmt(result.strategy.pi[i, j]),
                    _fmt(result.strategy.c[i, j])))


def write_value_csv(path, surface):
    with open(path, "w") as f:
        f.write("t,x,G,v\n")
        for t, x, Gv, vv in surface.rows():
            f.write("%s,%s,%s,%s\n" % (_fmt(t), _fmt(x), _fmt(Gv),
                                       _fmt(vv)))


def write_paths_csv(path, ens):
    with open(path, "w") as f:
        f.write("path,time,Y,X\n")
        for p in range(ens.n_paths):
            for j, s in enumerate(ens.times):
                f.write("%d,%s,%s,%s\n" % (p, _fmt(s), _fmt(ens.Y[p, j]),
                                           _fmt(ens.X[p, j])))


def _model_meta(cfg):
    return {
        "market": {"r": cfg.market.r, "mu": cfg.market.mu,
                   "sigma": cfg.market.sigma, "T": cfg.market.T,
                   "theta": cfg.market.theta},
        "discount": repr(cfg.discount),
        "utility": repr(cfg.utility),
        "grid": {"n_t": cfg.grid.n_t, "n_y": cfg.grid.n_y,
                 "y_min": float(cfg.grid.y_nodes[0]),
                 "y_max": float(cfg.grid.y_nodes[-1])},
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _out_dir(args, cfg):
    out = args.out or os.environ.get("TCMERTON_OUT") or cfg.out_dir
    if not out:
        raise ConfigError("no output directory: pass --out, set "
                          "TCMERTON_OUT or add [outputs] dir")
    os.makedirs(out, exist_ok=True)
    return out


def _solve(cfg):
    return pipeline.solve(cfg.market, cfg.utility, cfg.discount, cfg.grid,
                          tol=cfg.tol, max_iter=cfg.max_iter,
                          damping=cfg.damping, boundary=cfg.boundary)


def cmd_solve(args):
    cfg = RunConfig.from_file(args.config)
    out = _out_dir(args, cfg)
    t_start = time.time()
    result = _solve(cfg)
    elapsed = time.time() - t_start
    g = cfg.grid
    write_field_csv(os.path.join(out, "rho_bar.csv"), g,
                    result.rho.values, "rho_bar")
    write_field_csv(os.path.join(out, "pbar.csv"), g,
                    result.pbar.values, "pbar")
    write_strategy_csv(os.path.join(out, "strategy.csv"), result)
    t_probes = g.t_nodes[:: max(1, (g.n_t - 1) // 8)]
    x_lo, x_hi = result.pbar.wealth_range(float(t_probes[-1]))
    for tp in t_probes:
        lo, hi = result.pbar.wealth_range(float(tp))
        x_lo, x_hi = max(x_lo, lo), min(x_hi, hi)
    x_probes = np.geomspace(x_lo * 1.001, x_hi * 0.999, 25)
    surface = value_function(result.rho, result.pbar, cfg.market,
                             cfg.utility, cfg.discount, t_probes, x_probes,
                             G_field=result.G)
    write_value_csv(os.path.join(out, "value.csv"), surface)
    meta = _model_meta(cfg)
    meta.update({
        "iterations": result.rho.iterations,
        "residual_sup": result.rho.residual_sup,
        "residual_history": result.rho.residual_history,
        "kappa": result.kappa,
        "elapsed_seconds": elapsed,
    })
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
    print("solve: converged in %d iteration(s), residual %.3e, "
          "outputs in %s" % (result.rho.iterations,
                             result.rho.residual_sup, out))
    return 0


def cmd_simulate(args):
    cfg = RunConfig.from_file(args.config)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    result = _solve(cfg)
    t0 = args.t0
    x0 = args.x0
    if x0 is None:
        mid = 0.5 * (cfg.grid.y_nodes[0] + cfg.grid.y_nodes[-1])
        x0 = float(result.pbar(t0, mid))
    ens = simulate_wealth(cfg.market, result.rho.phi, result.strategy,
                          result.pbar, x0, t0=t0, n_steps=cfg.n_steps,
                          n_paths=cfg.n_paths, seed=seed,
                          antithetic=cfg.antithetic,
                          record_stride=cfg.record_stride)
    est = estimate_J(cfg.market, cfg.utility, cfg.discount, result.rho.phi,
                     result.strategy, result.pbar, x0, t0=t0,
                     n_steps=cfg.n_steps, n_paths=cfg.n_paths, seed=seed,
                     antithetic=cfg.antithetic)
    if ens.exit_fraction > 0.01:
        msg = ("%.1f%% of paths left the y-grid; results may be biased"
               % (100 * ens.exit_fraction))
        if args.strict:
            raise TCMertonError(msg)
        warnings.warn(msg)
    write_paths_csv(os.path.join(out, "paths.csv"), ens)
    summary = _model_meta(cfg)
    summary.update({
        "t0": t0, "x0": x0, "seed": seed,
        "n_paths": cfg.n_paths, "n_steps": cfg.n_steps,
        "antithetic": cfg.antithetic,
        "exit_fraction": ens.exit_fraction,
        "J_estimate": est.value, "J_se": est.se,
        "terminal_wealth_mean": float(np.mean(ens.X[:, -1])),
        "terminal_wealth_std": float(np.std(ens.X[:, -1])),
    })
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    print("simulate: J = %.6g +/- %.2g (se), %d paths, outputs in %s"
          % (est.value, est.se, cfg.n_paths, out))
    return 0


def cmd_verify(args):
    cfg = RunConfig.from_file(args.config)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    result = _solve(cfg)
    report = full_report(result, x0=args.x0, t0=args.t0,
                         n_steps=cfg.n_steps, n_paths=cfg.n_paths,
                         seed=seed + 1000)
    with open(os.path.join(out, "report.json"), "w") as f:
        json.dump(report.to_dict(), f, indent=2)
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed else 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="tcmerton",
        description="Time-consistent consumption-investment solver")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="enable info-level logging")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
            ("solve", cmd_solve,
             "solve the fixed point and export the strategy surfaces"),
            ("simulate", cmd_simulate,
             "simulate equilibrium wealth paths and the reward"),
            ("verify", cmd_verify,
             "run the verification suite and write report.json")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True,
                        help="INI model/numerics configuration")
        sp.add_argument("--out", help="output directory "
                        "(default: $TCMERTON_OUT or [outputs] dir)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the Monte Carlo seed")
        sp.add_argument("--t0", type=float, default=0.0,
                        help="evaluation time (default 0)")
        sp.add_argument("--x0", type=float, default=None,
                        help="initial wealth (default: grid midpoint)")
        sp.add_argument("--strict", action="store_true",
                        help="escalate coverage warnings to errors")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except TCMertonError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
