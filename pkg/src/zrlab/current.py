"""Stationary particle current through every bond and its macroscopic
rescalings (fractional Fick's law).

Under the product stationary state the expected current through x - 1/2
is a linear functional of the fugacity profile; the same evaluator serves
the exclusion process with (density, boundary) = (phi_N/(phi_a+phi_b),
(a~, b~)), which makes the exact proportionality between the two currents
a one-line check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError
from .hydrostatic import (ContinuumProfile, Regime, classify_regime,
                          tilde_densities)
from .kernel import KernelParams
from .quadrature import integrate_panels, panel_nodes
from .thermo import ThermoTables
from .traffic import (FugacityProfile, ModelParams, TrafficSystem, assemble,
                      solve_direct, solve_iterative)


def _bond_currents_generic(dens: np.ndarray, bc_left: float, bc_right: float,
                           system: TrafficSystem) -> np.ndarray:
    """E[W_x] for x = 1..N given site means ``dens`` and reservoir levels.

    O(N) per bond after O(N) prefix sums: kernel partial sums reduce the
    double sum over (y < x <= z) to two sliding inner products.
    """
    N = system.N
    p = system.kernel_row                      # p[k], k = 0..N-2
    P_cum = np.concatenate([[0.0], np.cumsum(p[1:])])   # sum_{j<=k} p(j)
    left = system.rates.left                   # r^-(z/N), z = 1..N-1
    right = system.rates.right
    scale = system.params.boundary_scale()
    lterm = left * (bc_left - dens)            # z-indexed
    rterm = right * (bc_right - dens)          # y-indexed
    # suffix sums over z >= x and prefix sums over y <= x-1
    lsuf = np.concatenate([np.cumsum(lterm[::-1])[::-1], [0.0]])
    rpre = np.concatenate([[0.0], np.cumsum(rterm)])
    out = np.empty(N)
    for x in range(1, N + 1):
        ys = np.arange(1, x)
        zs = np.arange(x, N)
        bulk = 0.0
        if len(ys) and len(zs):
            s_right = P_cum[N - 1 - ys] - P_cum[x - 1 - ys]
            s_left = P_cum[zs - 1] - P_cum[zs - x]
            bulk = float(dens[ys - 1] @ s_right) - float(dens[zs - 1] @ s_left)
        out[x - 1] = bulk + scale * (lsuf[x - 1] - rpre[x - 1])
    return out


def bond_currents(profile: FugacityProfile,
                  system: TrafficSystem) -> np.ndarray:
    """Zero-range expected currents E[W_x], x = 1..N."""
    return _bond_currents_generic(profile.values, profile.phi_alpha,
                                  profile.phi_beta, system)


def exclusion_bond_currents(profile: FugacityProfile,
                            system: TrafficSystem) -> np.ndarray:
    """Exclusion-side currents from the statically mapped profile."""
    phi_sum = profile.phi_alpha + profile.phi_beta
    a_t, b_t = tilde_densities(profile.phi_alpha, profile.phi_beta)
    return _bond_currents_generic(profile.values / phi_sum, a_t, b_t, system)


def stationary_current(profile: FugacityProfile, system: TrafficSystem,
                       x: int) -> float:
    """E[W_x] through the bond x - 1/2 (zero-range units)."""
    if not 1 <= x <= system.N:
        raise DomainError(f"bond index x={x} outside 1..N={system.N}")
    return float(bond_currents(profile, system)[x - 1])


@dataclass
class CurrentReport:
    per_x: np.ndarray            # E[W_x], x = 1..N
    rescaled: float              # E[W_1] / B_N(theta)
    params: ModelParams

    def relative_spread(self) -> float:
        mean = float(np.mean(self.per_x))
        if mean == 0.0:
            return float(np.max(np.abs(self.per_x)))
        return float((self.per_x.max() - self.per_x.min()) / abs(mean))


def current_report(profile: FugacityProfile,
                   system: TrafficSystem) -> CurrentReport:
    per_x = bond_currents(profile, system)
    B = scaling_B(system.N, system.params.theta, system.params.gamma)
    return CurrentReport(per_x=per_x, rescaled=float(per_x[0]) / B,
                         params=system.params)


def scaling_B(N: int, theta: float, gamma: float) -> float:
    """Fick rescaling B_N: N^(1-gamma) for theta >= 0, N^(1-theta-gamma) else."""
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    if theta >= 0.0:
        return float(N) ** (1.0 - gamma)
    return float(N) ** (1.0 - theta - gamma)


def h_theta_fn(u: float, gamma: float, theta: float, kappa: float,
               kernel: KernelParams) -> float:
    """Weight h_theta(u) pairing the density profile in the current limit.

    At theta = 0 both indicator branches are active (the theta = 0 limit
    carries both the bulk and the reservoir contribution).
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"h_theta undefined at u={u}")
    c = kernel.c_gamma
    if gamma == 1.0:
        if theta >= 0.0:
            return c * (math.log(1.0 - u) - math.log(u))
        return 0.0
    coef = 0.0
    if theta <= 0.0:
        coef += kappa / gamma
    if theta >= 0.0:
        coef += 1.0 / (1.0 - gamma)
    return c * coef * ((1.0 - u) ** (1.0 - gamma) - u ** (1.0 - gamma))


def fick_constant(alpha_tilde: float, beta_tilde: float, gamma: float,
                  theta: float, kappa: float, kernel: KernelParams) -> float:
    """Constant offset C(a~, b~, theta); zero for theta > 0."""
    if theta > 0.0:
        return 0.0
    return (kernel.c_gamma * kappa * (alpha_tilde - beta_tilde)
            / (gamma * (2.0 - gamma)))


def closed_form_limit_zr(phi_alpha: float, phi_beta: float, gamma: float,
                         kappa: float, kernel: KernelParams) -> float:
    """theta < 0 limit: kappa c g^-1 (phi_a - phi_b) int dv/(v^g+(1-v)^g)."""
    def integrand(v):
        return 1.0 / (v ** gamma + (1.0 - v) ** gamma)

    val = integrate_panels(integrand, np.linspace(0.0, 1.0, 33), n=12)
    return kappa * kernel.c_gamma / gamma * (phi_alpha - phi_beta) * val


def h_weighted_limit(profile: ContinuumProfile, gamma: float, theta: float,
                     kappa: float, kernel: KernelParams) -> float:
    """int h_theta(u) rho(u) du + C, in exclusion units.

    h_theta ~ u^(1-gamma) at the ends is integrable for gamma in (0,2);
    panels shrink geometrically toward both endpoints.
    """
    rho_at = profile.rho_at()

    def integrand(us):
        h = np.array([h_theta_fn(float(u), gamma, theta, kappa, kernel)
                      for u in us])
        return h * np.asarray(rho_at(us), dtype=float)

    edges = np.concatenate([
        np.geomspace(1e-12, 0.2, 30), np.linspace(0.2, 0.8, 13)[1:],
        1.0 - np.geomspace(0.2, 1e-12, 30)[1:]])
    edges = np.concatenate([[0.0], edges, [1.0]])
    val = integrate_panels(integrand, edges, n=12)
    return val + fick_constant(profile.alpha_tilde, profile.beta_tilde,
                               gamma, theta, kappa, kernel)


def _dense_rho(profile: ContinuumProfile) -> Callable:
    """Fast pchip evaluator built from the profile on a dense graded grid."""
    us = np.unique(np.concatenate([
        [0.0], np.geomspace(1e-8, 2e-3, 40),
        np.linspace(2e-3, 1.0 - 2e-3, 2001),
        1.0 - np.geomspace(2e-3, 1e-8, 40), [1.0]]))
    vals = np.asarray(profile.rho_at()(us), dtype=float)
    interp = PchipInterpolator(us, vals, extrapolate=False)

    def evaluate(u):
        return interp(np.clip(np.asarray(u, dtype=float), 0.0, 1.0))

    return evaluate


def _double_integral(rho_fast: Callable, u: float, gamma: float,
                     phi_sum: float, kernel: KernelParams,
                     s_min: float = 1e-12, nodes: int = 6) -> float:
    """c int_0^u dv int_u^1 dw (Phi m(v) - Phi m(w)) / (w-v)^(1+gamma).

    Substituting s = u-v, t = w-u and grading panels geometrically toward
    the corner s = t = 0, where the Lipschitz difference tames the kernel.
    """
    def geom(a, b):
        edges = [a]
        while edges[-1] * 2.0 < b:
            edges.append(edges[-1] * 2.0)
        edges.append(b)
        return np.array(edges)

    s_edges = geom(s_min, u)
    t_edges = geom(s_min, 1.0 - u)
    total = 0.0
    for sa, sb in zip(s_edges[:-1], s_edges[1:]):
        s_nodes, s_w = panel_nodes(sa, sb, nodes)
        rho_v = rho_fast(u - s_nodes)
        for ta, tb in zip(t_edges[:-1], t_edges[1:]):
            t_nodes, t_w = panel_nodes(ta, tb, nodes)
            rho_w = rho_fast(u + t_nodes)
            diff = rho_v[:, None] - rho_w[None, :]
            ker = (s_nodes[:, None] + t_nodes[None, :]) ** (-(1.0 + gamma))
            total += float(s_w @ (diff * ker) @ t_w)
    return kernel.c_gamma * phi_sum * total


def _reservoir_terms(rho_fast: Callable, u: float, gamma: float,
                     kappa: float, phi_alpha: float, phi_beta: float,
                     phi_sum: float, kernel: KernelParams) -> float:
    """kappa [int_u^1 (phi_a - Phi m(v)) r^-(v) dv
              - int_0^u (phi_b - Phi m(v)) r^+(v) dv]."""
    pref = kernel.c_gamma / gamma

    def left_part(v):
        return (phi_alpha - phi_sum * rho_fast(v)) * pref * v ** -gamma

    def right_part(v):
        return (phi_beta - phi_sum * rho_fast(v)) * pref * (1.0 - v) ** -gamma

    lval = integrate_panels(left_part, np.linspace(u, 1.0, 25), n=12)
    rval = integrate_panels(right_part, np.linspace(0.0, u, 25), n=12)
    return kappa * (lval - rval)


@dataclass
class FickLimit:
    u_values: np.ndarray
    values: np.ndarray       # limit evaluated at each u (zero-range units)
    mean: float
    spread: float
    closed_form: Optional[float]    # theta < 0 only
    regime: Regime


def fick_limit(profile: ContinuumProfile, params: ModelParams,
               kernel: Optional[KernelParams] = None,
               u_values: Sequence[float] = (0.2, 0.35, 0.5, 0.65, 0.8)
               ) -> FickLimit:
    """Macroscopic current limit at several cut points.

    theta < 0 uses the reservoir integrals (plus the closed form as a
    cross-check); theta = 0 adds the bulk double integral; theta > 0 keeps
    the double integral alone.  The result must be u-independent; the
    spread over ``u_values`` is reported.
    """
    if profile.provenance == "extrapolated" and profile.err_estimate is None:
        raise DomainError("extrapolated profile lacks the error estimate "
                          "needed to bound the singular double integral")
    kernel = kernel or params.kernel_params()
    gamma, theta, kappa = params.gamma, params.theta, params.kappa
    phi_sum = profile.phi_sum
    phi_a = profile.alpha_tilde * phi_sum
    phi_b = profile.beta_tilde * phi_sum
    rho_fast = _dense_rho(profile)
    vals = []
    for u in u_values:
        total = 0.0
        if theta <= 0.0:
            total += _reservoir_terms(rho_fast, u, gamma, kappa, phi_a,
                                      phi_b, phi_sum, kernel)
        if theta >= 0.0:
            total += _double_integral(rho_fast, u, gamma, phi_sum, kernel)
        vals.append(total)
    vals = np.array(vals)
    closed = None
    if theta < 0.0:
        closed = closed_form_limit_zr(phi_a, phi_b, gamma, kappa, kernel)
    return FickLimit(u_values=np.asarray(u_values, dtype=float), values=vals,
                     mean=float(vals.mean()),
                     spread=float(vals.max() - vals.min()),
                     closed_form=closed,
                     regime=classify_regime(gamma, theta, kappa, kernel))


@dataclass
class SweepResult:
    """Observable vs N records with the extrapolated limit."""

    N_values: tuple
    currents: np.ndarray
    rescaled: np.ndarray
    extrapolated: float
    err_estimate: float
    closed_form: Optional[float]
    rel_err: Optional[float]

    def to_csv(self, path, header_lines=()) -> None:
        lines = list(header_lines)
        lines.append("N,B_N,current,rescaled,extrapolated_limit,"
                     "closed_form,rel_err")
        for N, cur, res in zip(self.N_values, self.currents, self.rescaled):
            B = float(cur / res) if res != 0.0 else float("nan")
            cf = "" if self.closed_form is None else repr(float(self.closed_form))
            re_ = "" if self.rel_err is None else repr(float(self.rel_err))
            lines.append(f"{N},{B!r},{float(cur)!r},{float(res)!r},"
                         f"{float(self.extrapolated)!r},{cf},{re_}")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n")


def fick_sweep(params_base: ModelParams, N_sequence: Sequence[int],
               thermo: Optional[ThermoTables] = None,
               direct_cap: int = 4096) -> SweepResult:
    """Rescaled current E[W_1]/B_N along N_sequence, Richardson limit, and
    the closed-form comparison when theta < 0."""
    from .hydrostatic import _fit_power_limit  # shared extrapolation core

    if len(N_sequence) < 3:
        raise DomainError("need at least 3 lattice sizes to extrapolate")
    thermo = thermo or params_base.make_thermo()
    kernel = params_base.kernel_params()
    currents = []
    rescaled = []
    for N in N_sequence:
        params = ModelParams(
            gamma=params_base.gamma, theta=params_base.theta,
            kappa=params_base.kappa, alpha=params_base.alpha,
            beta=params_base.beta, N=int(N), rate=params_base.rate,
            normalization_mode=params_base.normalization_mode,
            phi_alpha=params_base.phi_alpha, phi_beta=params_base.phi_beta)
        system = assemble(params, thermo, kernel)
        if N <= direct_cap:
            profile = solve_direct(system)
        else:
            profile = solve_iterative(system)
        w1 = stationary_current(profile, system, 1)
        currents.append(w1)
        rescaled.append(w1 / scaling_B(int(N), params.theta, params.gamma))
    rescaled_arr = np.array(rescaled)
    limit, err, _warn = _fit_power_limit(rescaled_arr, N_sequence)
    closed = None
    rel = None
    if params_base.theta < 0.0:
        probe = ModelParams(
            gamma=params_base.gamma, theta=params_base.theta,
            kappa=params_base.kappa, alpha=params_base.alpha,
            beta=params_base.beta, N=16, rate=params_base.rate,
            normalization_mode=params_base.normalization_mode,
            phi_alpha=params_base.phi_alpha, phi_beta=params_base.phi_beta)
        phi_a, phi_b = probe.boundary_fugacities(thermo)
        closed = closed_form_limit_zr(phi_a, phi_b, params_base.gamma,
                                      params_base.kappa, kernel)
        if closed != 0.0:
            rel = abs(limit - closed) / abs(closed)
    return SweepResult(N_values=tuple(int(n) for n in N_sequence),
                       currents=np.array(currents), rescaled=rescaled_arr,
                       extrapolated=limit, err_estimate=err,
                       closed_form=closed, rel_err=rel)
