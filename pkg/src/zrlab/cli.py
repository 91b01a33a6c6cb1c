"""Command-line front end: reproducible experiments emitting CSV data
files plus one structured-text report per run.

Subcommands: thermo, profile, current, simulate, ldp.  Every output file
starts with a comment header carrying the resolved configuration and the
package version; given the same config and seed, re-running a command
produces byte-identical files.

Exit codes: 0 success, 2 config error, 3 domain error, 4 convergence
failure, 5 statistical-check failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, DomainError
from . import current as current_mod
from . import hydrostatic as hydro
from . import ldp as ldp_mod
from . import mc
from .thermo import RateFunction, ThermoTables, read_rate_table
from .traffic import (ModelParams, assemble, solve_direct, solve_iterative,
                      write_profile_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_CONVERGENCE = 4
EXIT_STATISTICAL = 5


@dataclass
class RunConfig:
    """Validated run configuration (model parameters plus command options)."""

    command: str
    gamma: float = 1.5
    theta: float = 0.0
    kappa: float = 1.0
    alpha: Optional[float] = 0.4
    beta: Optional[float] = 1.6
    phi_alpha: Optional[float] = None
    phi_beta: Optional[float] = None
    N_list: tuple = (256,)
    g_spec: str = "identity"
    normalization: str = "normalized"
    seed: int = 1
    out: Path = Path("out")
    tol: float = 1e-12
    t_burn: Optional[float] = None
    t_sample: float = 2000.0
    grid_points: int = 257
    phi_grid_max: Optional[float] = None
    negative_control: bool = False
    figure3: bool = False

    def validate(self) -> None:
        if not 0.0 < self.gamma < 2.0:
            raise ConfigError(f"gamma must lie in (0,2), got {self.gamma}")
        if self.kappa <= 0.0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if any(n < 2 for n in self.N_list):
            raise ConfigError(f"every N must be >= 2, got {self.N_list}")
        if list(self.N_list) != sorted(set(self.N_list)):
            raise ConfigError("N values must be strictly increasing")
        if (self.phi_alpha is None) != (self.phi_beta is None):
            raise ConfigError("give both --phi-alpha and --phi-beta or neither")
        if self.phi_alpha is None and (self.alpha is None or self.beta is None):
            raise ConfigError("boundary data missing (alpha/beta)")
        if self.t_sample <= 0.0:
            raise ConfigError("t-sample must be positive")
        if self.grid_points < 9:
            raise ConfigError("grid must have at least 9 points")

    def rate(self) -> RateFunction:
        if self.g_spec == "identity":
            return RateFunction.identity()
        if self.g_spec == "indicator":
            return RateFunction.indicator()
        if self.g_spec == "figure3":
            return RateFunction.figure3()
        if self.g_spec.startswith("table:"):
            return read_rate_table(self.g_spec[len("table:"):])
        raise ConfigError(f"unknown rate function spec {self.g_spec!r}")

    def model(self, N: int, thermo: Optional[ThermoTables] = None,
              swap_boundaries: bool = False) -> ModelParams:
        rate = self.rate()
        if self.phi_alpha is not None:
            pa, pb = self.phi_alpha, self.phi_beta
            if swap_boundaries:
                pa, pb = pb, pa
            return ModelParams.from_fugacities(
                self.gamma, self.theta, self.kappa, pa, pb, N, rate,
                self.normalization, thermo=thermo)
        a, b = self.alpha, self.beta
        if swap_boundaries:
            a, b = b, a
        return ModelParams(gamma=self.gamma, theta=self.theta,
                           kappa=self.kappa, alpha=a, beta=b, N=N,
                           rate=rate, normalization_mode=self.normalization)

    def header_lines(self) -> list[str]:
        keys = ["command", "gamma", "theta", "kappa", "alpha", "beta",
                "phi_alpha", "phi_beta", "N_list", "g", "normalization",
                "seed", "tol", "t_burn", "t_sample", "grid_points"]
        vals = [self.command, self.gamma, self.theta, self.kappa, self.alpha,
                self.beta, self.phi_alpha, self.phi_beta,
                ",".join(str(n) for n in self.N_list), self.g_spec,
                self.normalization, self.seed, self.tol, self.t_burn,
                self.t_sample, self.grid_points]
        lines = [f"# zrlab_version = {__version__}"]
        lines += [f"# {k} = {v}" for k, v in zip(keys, vals)]
        return lines


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="key=value config file")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--theta", type=float)
    parser.add_argument("--kappa", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--phi-alpha", type=float, dest="phi_alpha",
                        help="boundary fugacity (overrides --alpha)")
    parser.add_argument("--phi-beta", type=float, dest="phi_beta")
    parser.add_argument("--N", type=int, action="append", dest="N_list",
                        help="lattice size; repeatable")
    parser.add_argument("--g", type=str, dest="g_spec",
                        help="identity|indicator|figure3|table:PATH")
    parser.add_argument("--normalization", type=str,
                        choices=["normalized", "paper-literal"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=str)
    parser.add_argument("--tol", type=float)


def _load_config_file(path: str) -> dict:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    out = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            out[key.replace("-", "_")] = val
    return out


_FLOAT_KEYS = {"gamma", "theta", "kappa", "alpha", "beta", "phi_alpha",
               "phi_beta", "tol", "t_burn", "t_sample", "phi_grid_max"}
_INT_KEYS = {"seed", "grid_points"}


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if getattr(args, "config", None):
        for key, val in _load_config_file(args.config).items():
            if key == "n_list" or key == "n":
                cfg.N_list = tuple(int(v) for v in val.split(","))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(val))
            elif key in _INT_KEYS:
                setattr(cfg, key, int(val))
            elif key in ("g", "g_spec"):
                cfg.g_spec = val
            elif key == "normalization":
                cfg.normalization = val.replace("-", "_")
            elif key == "out":
                cfg.out = Path(val)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key in ("gamma", "theta", "kappa", "alpha", "beta", "phi_alpha",
                "phi_beta", "g_spec", "seed", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "N_list", None):
        cfg.N_list = tuple(args.N_list)
    if getattr(args, "normalization", None):
        cfg.normalization = args.normalization.replace("-", "_")
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    for key in ("t_burn", "t_sample", "grid_points", "phi_grid_max"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    cfg.negative_control = bool(getattr(args, "negative_control", False))
    cfg.figure3 = bool(getattr(args, "figure3", False))
    if cfg.figure3:
        cfg.g_spec = "figure3"
        if cfg.phi_alpha is None:
            cfg.phi_alpha, cfg.phi_beta = 0.2, 0.8
    cfg.validate()
    return cfg


def _write(path: Path, header: list[str], body_lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(header + body_lines) + "\n")


class Report:
    """Structured-text run report: key = value lines plus check lines."""

    def __init__(self, cfg: RunConfig):
        self.lines = list(cfg.header_lines())
        self.failures = []

    def add(self, key: str, value) -> None:
        self.lines.append(f"{key} = {value}")

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        self.lines.append(f"check:{name} = {status}{suffix}")
        if not ok:
            self.failures.append(name)

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_thermo(cfg: RunConfig) -> int:
    thermo = ThermoTables.create(cfg.rate())
    report = Report(cfg)
    hi = cfg.phi_grid_max
    if hi is None:
        hi = (min(0.98 * thermo.phi_max(), 4.0)
              if math.isfinite(thermo.phi_star) else 4.0)
    if hi > thermo.phi_max():
        raise DomainError(
            f"phi grid max {hi} exceeds the working range "
            f"[0, {thermo.phi_max():g})")
    phis = np.linspace(0.0, hi, 51)
    rows = []
    max_rt = 0.0
    for phi in phis:
        Z = thermo.partition_function(float(phi))
        R = thermo.mean_density(float(phi))
        rt = abs(thermo.fugacity(R) - phi)
        max_rt = max(max_rt, rt)
        rows.append(f"{float(phi)!r},{float(Z)!r},{float(R)!r},{float(rt)!r}")
    _write(cfg.out / "thermo_phi.csv", cfg.header_lines(),
           ["phi,Z,R,roundtrip_error"] + rows)
    m_hi = thermo.mean_density(float(0.98 * phis[-1]))
    ms = np.linspace(0.0, m_hi, 51)
    rows = [f"{float(m)!r},{float(thermo.fugacity(float(m)))!r}" for m in ms]
    _write(cfg.out / "thermo_density.csv", cfg.header_lines(),
           ["m,Phi"] + rows)
    report.add("phi_star", thermo.phi_star)
    report.add("m_star", thermo.m_star)
    report.add("max_roundtrip_error", max_rt)
    report.check("roundtrip", max_rt < 1e-10, f"max {max_rt:g}")
    report.write(cfg.out / "report.txt")
    return EXIT_STATISTICAL if report.failures else EXIT_OK


def cmd_profile(cfg: RunConfig) -> int:
    thermo = ThermoTables.create(cfg.rate())
    report = Report(cfg)
    kernel = cfg.model(cfg.N_list[0], thermo).kernel_params()
    regime = hydro.classify_regime(cfg.gamma, cfg.theta, cfg.kappa, kernel)
    report.add("regime", regime.tag)
    report.add("kappa_hat", regime.kappa_hat)
    profiles = {}
    for N in cfg.N_list:
        params = cfg.model(N, thermo)
        system = assemble(params, thermo, kernel)
        prof = (solve_direct(system) if N <= 4096
                else solve_iterative(system, tol=cfg.tol))
        profiles[N] = prof
        write_profile_csv(prof, thermo, cfg.out / f"profile_N{N}.csv")
        report.add(f"residual_N{N}", prof.residual_norm)
    grid = hydro.default_grid(cfg.grid_points)
    base = cfg.model(cfg.N_list[-1], thermo)
    if regime.tag in hydro.EXTRAPOLATED_REGIMES:
        if len(cfg.N_list) < 3:
            raise ConfigError(
                "extrapolated regimes need at least 3 N values")
        cont = hydro.rho_extrapolated(base, regime, cfg.N_list, thermo, grid)
    else:
        cont = hydro.rho_closed_form(base, regime, thermo, grid)
    hydro.write_continuum_csv(cont, cfg.out / "continuum_profile.csv")
    # convergence gaps of raw lattice ratio toward rho on interior points
    rows = []
    interior = grid[(grid >= 0.1) & (grid <= 0.9)]
    rho_ref = np.asarray(cont.rho_at()(interior), dtype=float)
    for N in cfg.N_list:
        pr = profiles[N]
        vals = np.array([pr.phi_at(min(max(int(u * N), 1), N - 1))
                         for u in interior]) / cont.phi_sum
        rows.append(f"{N},{float(np.max(np.abs(vals - rho_ref)))!r}")
    _write(cfg.out / "convergence_gaps.csv", cfg.header_lines(),
           ["N,sup_gap"] + rows)
    mid_idx = len(grid) // 2
    mid_val = cont.m[mid_idx]
    mid_expected = thermo.mean_density(0.5 * cont.phi_sum)
    report.add("midpoint_m", mid_val)
    report.add("midpoint_expected", mid_expected)
    report.check("midpoint_identity", abs(mid_val - mid_expected) < 1e-8,
                 f"|diff| = {abs(mid_val - mid_expected):g}")
    sym = float(np.max(np.abs(cont.rho + cont.rho[::-1] - 1.0)))
    report.add("rho_symmetry_gap", sym)
    # boundary behaviour is reported, never asserted
    r0, r1 = cont.boundary_values()
    report.add("rho_boundary_left", float(r0))
    report.add("rho_boundary_right", float(r1))
    report.write(cfg.out / "report.txt")
    return EXIT_STATISTICAL if report.failures else EXIT_OK


def cmd_current(cfg: RunConfig) -> int:
    thermo = ThermoTables.create(cfg.rate())
    report = Report(cfg)
    kernel = cfg.model(cfg.N_list[0], thermo).kernel_params()
    N = cfg.N_list[-1]
    params = cfg.model(N, thermo)
    system = assemble(params, thermo, kernel)
    prof = solve_direct(system) if N <= 4096 else solve_iterative(system)
    rep = current_mod.current_report(prof, system)
    rows = [f"{x + 1},{float(w)!r}" for x, w in enumerate(rep.per_x)]
    _write(cfg.out / "bond_currents.csv", cfg.header_lines(),
           ["x,current"] + rows)
    report.add("current", float(rep.per_x[0]))
    report.add("rescaled", rep.rescaled)
    report.add("bond_spread", rep.relative_spread())
    report.check("bond_independence", rep.relative_spread() < 1e-10,
                 f"spread {rep.relative_spread():g}")
    if len(cfg.N_list) >= 3:
        sweep = current_mod.fick_sweep(cfg.model(2, thermo), cfg.N_list,
                                       thermo)
        sweep.to_csv(cfg.out / "fick_sweep.csv", cfg.header_lines())
        report.add("sweep_extrapolated", sweep.extrapolated)
        if sweep.closed_form is not None:
            report.add("sweep_closed_form", sweep.closed_form)
            report.add("sweep_rel_err", sweep.rel_err)
            report.check("fick_closed_form", sweep.rel_err < 0.02,
                         f"rel err {sweep.rel_err:g}")
    regime = hydro.classify_regime(cfg.gamma, cfg.theta, cfg.kappa, kernel)
    base = cfg.model(2, thermo)
    if regime.tag in hydro.EXTRAPOLATED_REGIMES and len(cfg.N_list) >= 3:
        cont = hydro.rho_extrapolated(base, regime, cfg.N_list, thermo)
    else:
        cont = hydro.rho_closed_form(base, regime, thermo)
    fl = current_mod.fick_limit(cont, params, kernel)
    report.add("fick_limit_mean", fl.mean)
    report.add("fick_limit_spread", fl.spread)
    if fl.closed_form is not None:
        report.add("fick_limit_closed_form", fl.closed_form)
    report.write(cfg.out / "report.txt")
    return EXIT_STATISTICAL if report.failures else EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    thermo = ThermoTables.create(cfg.rate())
    report = Report(cfg)
    N = cfg.N_list[0]
    params = cfg.model(N, thermo)
    system = assemble(params, thermo)
    profile = solve_direct(system) if N <= 4096 else solve_iterative(system)
    tables = mc.build_event_tables(params, thermo)
    t_burn = cfg.t_burn if cfg.t_burn is not None else None
    tables_ex = None
    if cfg.negative_control:
        tables_ex = mc.build_event_tables(
            cfg.model(N, thermo, swap_boundaries=True), thermo)
        report.add("negative_control", True)
    mapping = mc.mapping_check(params, profile,
                               seeds=(cfg.seed, cfg.seed + 1),
                               t_burn=t_burn if t_burn is not None else 0.05 * cfg.t_sample,
                               t_sample=cfg.t_sample, thermo=thermo,
                               tables_ex=tables_ex)
    est_zr = mc.simulate_zero_range(params, tables,
                                    t_burn if t_burn is not None else 0.05 * cfg.t_sample,
                                    cfg.t_sample, cfg.seed)
    est_ex = mc.simulate_exclusion(params, tables_ex or tables,
                                   t_burn if t_burn is not None else 0.05 * cfg.t_sample,
                                   cfg.t_sample, cfg.seed + 1)
    mc.write_estimate_csv(est_zr, profile, cfg.out / "zr_estimates.csv")
    mc.write_estimate_csv(est_ex, profile, cfg.out / "ex_estimates.csv")
    report.add("mapping_summary", mapping.summary())
    report.add("fraction_ok", mapping.fraction_ok)
    if cfg.negative_control:
        report.check("negative_control_fails", not mapping.passed,
                     mapping.summary())
    else:
        report.check("mapping", mapping.passed, mapping.summary())
    report.write(cfg.out / "report.txt")
    return EXIT_STATISTICAL if report.failures else EXIT_OK


_LDP_BASIS = (
    ("one", lambda u: np.ones_like(np.asarray(u, dtype=float))),
    ("u", lambda u: np.asarray(u, dtype=float)),
    ("u_sq", lambda u: np.asarray(u, dtype=float) ** 2),
    ("sin_pi_u", lambda u: np.sin(np.pi * np.asarray(u, dtype=float))),
    ("one_minus_u", lambda u: 1.0 - np.asarray(u, dtype=float)),
)


def cmd_ldp(cfg: RunConfig) -> int:
    thermo = ThermoTables.create(cfg.rate())
    report = Report(cfg)
    if len(cfg.N_list) < 3:
        raise ConfigError("ldp needs at least 3 N values")
    kernel = cfg.model(cfg.N_list[0], thermo).kernel_params()
    base = cfg.model(2, thermo)
    cont = hydro.profile_for_regime(base, cfg.N_list, thermo)
    profiles = {}
    for N in cfg.N_list:
        params = cfg.model(N, thermo)
        system = assemble(params, thermo, kernel)
        profiles[N] = (solve_direct(system) if N <= 4096
                       else solve_iterative(system))
    rows = []
    monotone_all = True
    for label, G in _LDP_BASIS:
        lam, lam_err = ldp_mod.lambda_limit_with_error(cont, thermo, G)
        per_n = [ldp_mod.log_mgf_scaled(profiles[N], thermo, G)
                 for N in cfg.N_list]
        gaps = [abs(v - lam) for v in per_n]
        monotone = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
        monotone_all = monotone_all and monotone
        tilt = lambda u, G=G: thermo.mean_density_array(
            np.exp(G(u)) * cont.phi_sum * np.asarray(cont.rho_at()(u)))
        rate_val = ldp_mod.rate_function(tilt, cont, thermo)
        cells = ",".join(repr(v) for v in per_n)
        rows.append(f"{label},{cells},{lam!r},{rate_val!r}")
    n_cols = ",".join(f"Lambda_N_over_N_{N}" for N in cfg.N_list)
    _write(cfg.out / "ldp_scan.csv", cfg.header_lines(),
           [f"label,{n_cols},Lambda_limit,rate_value"] + rows)
    zero = ldp_mod.rate_function(
        lambda u: np.interp(np.asarray(u, dtype=float), cont.grid, cont.m),
        cont, thermo)
    report.add("rate_at_typical_profile", zero)
    report.check("rate_vanishes_at_typical", abs(zero) < 1e-8, f"{zero:g}")
    report.check("gap_monotone", monotone_all)
    report.write(cfg.out / "report.txt")
    return EXIT_STATISTICAL if report.failures else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zrlab",
        description="stationary-state computations for the boundary-driven "
                    "zero-range process with long jumps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("thermo", cmd_thermo), ("profile", cmd_profile),
                     ("current", cmd_current), ("simulate", cmd_simulate),
                     ("ldp", cmd_ldp)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
        if name == "thermo":
            p.add_argument("--phi-grid-max", type=float, dest="phi_grid_max")
        if name == "profile":
            p.add_argument("--grid-points", type=int, dest="grid_points")
            p.add_argument("--figure3", action="store_true",
                           help="figure-3 preset: g=figure3, boundary "
                                "fugacities 0.2/0.8")
        if name == "simulate":
            p.add_argument("--t-burn", type=float, dest="t_burn")
            p.add_argument("--t-sample", type=float, dest="t_sample")
            p.add_argument("--negative-control", action="store_true",
                           dest="negative_control")
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
