"""Continuum density profiles of the five (gamma, theta) regimes, with
convergence diagnostics for the discrete profile and weak-form residuals
of the limiting boundary-value problems.

Only two regimes have closed forms (the ratio V0/V1 for strong coupling,
a constant for vanishing coupling).  The reaction-diffusion, Dirichlet
and Robin profiles are produced by Richardson-extrapolating the exact
microscopic solution in N; the weak-form functionals then provide the
independent PDE-side verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError
from .kernel import (KernelParams, first_moment_half, regional_frac_laplacian,
                     vectorized)
from .quadrature import integrate_panels
from .thermo import ThermoTables
from .traffic import (FugacityProfile, ModelParams, assemble,
                      solve_direct, solve_iterative)

EXPLICIT_RATIO = "ExplicitRatio"
REACTION_DIFFUSION = "ReactionDiffusion"
DIRICHLET = "Dirichlet"
ROBIN = "Robin"
NEUMANN = "Neumann"

EXTRAPOLATED_REGIMES = (REACTION_DIFFUSION, DIRICHLET, ROBIN)


@dataclass(frozen=True)
class Regime:
    tag: str
    kappa_hat: float


def classify_regime(gamma: float, theta: float, kappa: float = 1.0,
                    kernel: Optional[KernelParams] = None) -> Regime:
    """Map (gamma, theta) to the limiting boundary-value problem.

    Boundary ties: theta = 0 and theta = gamma - 1 are resolved by exact
    float comparison; gamma = 1 belongs to the gamma <= 1 branch, so any
    theta > 0 there is Neumann, while (theta = 0, gamma = 1) is refused
    (the limit theorems exclude that point).
    """
    if not 0.0 < gamma < 2.0:
        raise DomainError(f"gamma must lie in (0,2), got {gamma}")
    if theta < 0.0:
        return Regime(EXPLICIT_RATIO, kappa)
    if theta == 0.0:
        if gamma == 1.0:
            raise DomainError(
                "the point theta=0, gamma=1 is outside the treated regimes")
        return Regime(REACTION_DIFFUSION, kappa)
    if gamma <= 1.0:
        return Regime(NEUMANN, 0.0)
    if theta < gamma - 1.0:
        return Regime(DIRICHLET, 0.0)
    if theta == gamma - 1.0:
        kernel = kernel or KernelParams.create(gamma)
        return Regime(ROBIN, kappa * first_moment_half(kernel))
    return Regime(NEUMANN, 0.0)


def tilde_densities(phi_alpha: float, phi_beta: float) -> tuple[float, float]:
    """Exclusion-side boundary densities; they always sum to 1."""
    s = phi_alpha + phi_beta
    return phi_alpha / s, phi_beta / s


def rho_explicit(u, regime: Regime, alpha_tilde: float, beta_tilde: float,
                 gamma: float):
    """Closed-form profiles: V0/V1 (ExplicitRatio) or the constant mean
    (Neumann).  The normalization constant cancels in both."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if regime.tag == NEUMANN:
        out = np.full_like(u_arr, 0.5 * (alpha_tilde + beta_tilde))
    elif regime.tag == EXPLICIT_RATIO:
        out = np.empty_like(u_arr)
        lo = u_arr <= 0.5
        t = (u_arr[lo] / (1.0 - u_arr[lo])) ** gamma
        out[lo] = (alpha_tilde + beta_tilde * t) / (1.0 + t)
        s = ((1.0 - u_arr[~lo]) / u_arr[~lo]) ** gamma
        out[~lo] = (alpha_tilde * s + beta_tilde) / (s + 1.0)
    else:
        raise DomainError(f"no closed form for regime {regime.tag}")
    if np.isscalar(u):
        return float(out[0])
    return out


def _fit_power_limit(vals: Sequence[float], scales: Sequence[float],
                     p_lo: float = 0.2, p_hi: float = 2.0):
    """Extrapolate v_i = c0 + c1 * s_i^(-p) to s -> inf, free p clamped.

    ``scales`` must be increasing (e.g. lattice sizes).  Returns
    (c0, err_estimate, warn) where warn marks a non-monotone fallback.
    """
    v1, v2, v3 = vals[-3:]
    s1, s2, s3 = (float(s) for s in scales[-3:])
    d1, d2 = v1 - v2, v2 - v3
    tiny = 1e-13 * max(1.0, abs(v3))
    if abs(d1) < tiny and abs(d2) < tiny:
        return v3, abs(d2), False
    if d1 * d2 <= 0.0 or abs(d2) >= abs(d1):
        return v3, max(abs(d1), abs(d2)), True

    def mismatch(p):
        return (d1 / d2) - (s1 ** -p - s2 ** -p) / (s2 ** -p - s3 ** -p)

    lo, hi = p_lo, p_hi
    m_lo, m_hi = mismatch(lo), mismatch(hi)
    if m_lo * m_hi > 0.0:
        p = lo if abs(m_lo) < abs(m_hi) else hi
    else:
        for _ in range(60):
            p = 0.5 * (lo + hi)
            if mismatch(lo) * mismatch(p) <= 0.0:
                hi = p
            else:
                lo = p
        p = 0.5 * (lo + hi)
    c1 = d2 / (s2 ** -p - s3 ** -p)
    c0 = v3 - c1 * s3 ** -p
    return c0, abs(c0 - v3), False


class DiscreteProfileFamily:
    """Traffic-equation solutions across an increasing N sequence.

    Point evaluations rho(u) Richardson-extrapolate phi_N(floor(uN)) /
    (phi_alpha + phi_beta) over the last three N values.
    """

    def __init__(self, params_base: ModelParams, N_values: Sequence[int],
                 profiles: list[FugacityProfile]):
        self.params_base = params_base
        self.N_values = tuple(int(n) for n in N_values)
        self.profiles = profiles
        self.phi_alpha = profiles[-1].phi_alpha
        self.phi_beta = profiles[-1].phi_beta
        self.phi_sum = self.phi_alpha + self.phi_beta

    @classmethod
    def solve(cls, params_base: ModelParams, N_values: Sequence[int],
              thermo: Optional[ThermoTables] = None,
              direct_cap: int = 4096) -> "DiscreteProfileFamily":
        if len(N_values) < 3:
            raise DomainError("need at least 3 lattice sizes to extrapolate")
        if any(b <= a for a, b in zip(N_values[:-1], N_values[1:])):
            raise DomainError("N sequence must be increasing")
        thermo = thermo or params_base.make_thermo()
        profiles = []
        for N in N_values:
            params = ModelParams(
                gamma=params_base.gamma, theta=params_base.theta,
                kappa=params_base.kappa, alpha=params_base.alpha,
                beta=params_base.beta, N=int(N), rate=params_base.rate,
                normalization_mode=params_base.normalization_mode,
                phi_alpha=params_base.phi_alpha,
                phi_beta=params_base.phi_beta)
            system = assemble(params, thermo)
            if N <= direct_cap:
                profiles.append(solve_direct(system, cap=direct_cap))
            else:
                profiles.append(solve_iterative(system))
        return cls(params_base, N_values, profiles)

    def raw_ratio(self, u: float, i: int) -> float:
        """phi_N at floor(uN) over phi_alpha+phi_beta (the raw lattice ratio)."""
        N = self.N_values[i]
        x = min(max(int(math.floor(u * N)), 1), N - 1)
        return self.profiles[i].phi_at(x) / self.phi_sum

    def smooth_ratio(self, u: float, i: int) -> float:
        """Lattice ratio with linear interpolation between adjacent sites.

        floor(uN) alone carries an O(1/N) jitter of pseudo-random sign
        (u - floor(uN)/N), the same order as the convergence term itself,
        which destabilizes the extrapolation in N; interpolating between
        the two neighbouring sites removes the jitter at O(1/N^2) cost.
        """
        N = self.N_values[i]
        pos = u * N
        x0 = min(max(int(math.floor(pos)), 1), N - 2)
        w = min(max(pos - x0, 0.0), 1.0)
        prof = self.profiles[i]
        return ((1.0 - w) * prof.phi_at(x0)
                + w * prof.phi_at(x0 + 1)) / self.phi_sum

    def rho_point(self, u: float) -> tuple[float, float, bool]:
        vals = [self.smooth_ratio(u, i) for i in range(len(self.N_values))]
        c0, err, warn = _fit_power_limit(vals, self.N_values)
        if len(vals) >= 4:
            c0_prev, _, _ = _fit_power_limit(vals[:-1], self.N_values[:-1])
            err = max(abs(c0 - c0_prev), 1e-16)
        return c0, err, warn

    def rho_array(self, us: np.ndarray):
        out = np.empty(len(us))
        err = np.empty(len(us))
        warn = np.zeros(len(us), dtype=bool)
        for j, u in enumerate(us):
            out[j], err[j], warn[j] = self.rho_point(float(u))
        return out, err, warn

    def edge_limit(self, side: str) -> float:
        """rho at the boundary: the edge lattice site extrapolated in N."""
        if side == "left":
            vals = [pr.phi_at(1) / self.phi_sum for pr in self.profiles]
        else:
            vals = [pr.phi_at(N - 1) / self.phi_sum
                    for pr, N in zip(self.profiles, self.N_values)]
        c0, _, _ = _fit_power_limit(vals, self.N_values)
        return c0


def default_grid(n: int = 257) -> np.ndarray:
    """Uniform interior grid; endpoints excluded (profiles may be
    non-differentiable there)."""
    return np.linspace(1.0 / 256.0, 255.0 / 256.0, n)


@dataclass
class ContinuumProfile:
    """Macroscopic profile rho(u) and the density profile m(u) built from it."""

    grid: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    regime: Regime
    provenance: str                    # closed_form | extrapolated
    err_estimate: np.ndarray
    alpha_tilde: float
    beta_tilde: float
    phi_sum: float
    warn: np.ndarray = field(default=None, repr=False)
    boundary_left: Optional[float] = None
    boundary_right: Optional[float] = None
    _evaluator: Optional[Callable] = field(default=None, repr=False)

    def boundary_values(self) -> tuple[float, float]:
        """rho(0+), rho(1-): stored at construction when available, else a
        free-exponent fit of the grid points closest to each endpoint."""
        if self.boundary_left is not None:
            return self.boundary_left, self.boundary_right
        u = self.grid
        v0, _, _ = _fit_power_limit(
            [self.rho[2], self.rho[1], self.rho[0]],
            [1.0 / u[2], 1.0 / u[1], 1.0 / u[0]])
        v1, _, _ = _fit_power_limit(
            [self.rho[-3], self.rho[-2], self.rho[-1]],
            [1.0 / (1.0 - u[-3]), 1.0 / (1.0 - u[-2]), 1.0 / (1.0 - u[-1])])
        return v0, v1

    def rho_at(self) -> Callable:
        """Callable rho(u) for arbitrary u in [0,1].

        Extrapolated profiles carry a per-point evaluator over the solved
        lattice family; serialized profiles fall back to monotone
        interpolation of the grid."""
        if self._evaluator is None:
            r0, r1 = self.boundary_values()
            xs = np.concatenate([[0.0], self.grid, [1.0]])
            ys = np.concatenate([[r0], self.rho, [r1]])
            interp = PchipInterpolator(xs, ys, extrapolate=False)

            def evaluate(u):
                u_arr = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
                return interp(u_arr)

            self._evaluator = evaluate
        return self._evaluator


def _continuum_from_values(grid, rho, err, warn, regime, provenance,
                           a_t, b_t, phi_sum, thermo, evaluator=None,
                           boundary=(None, None)):
    phis = np.clip(phi_sum * rho, 0.0, None)
    m = thermo.mean_density_array(phis)
    return ContinuumProfile(grid=grid, rho=rho, m=m, regime=regime,
                            provenance=provenance, err_estimate=err,
                            alpha_tilde=a_t, beta_tilde=b_t,
                            phi_sum=phi_sum, warn=warn,
                            boundary_left=boundary[0],
                            boundary_right=boundary[1],
                            _evaluator=evaluator)


def rho_closed_form(params: ModelParams, regime: Regime,
                    thermo: Optional[ThermoTables] = None,
                    grid: Optional[np.ndarray] = None) -> ContinuumProfile:
    thermo = thermo or params.make_thermo()
    grid = default_grid() if grid is None else grid
    phi_a, phi_b = params.boundary_fugacities(thermo)
    a_t, b_t = tilde_densities(phi_a, phi_b)
    rho = rho_explicit(grid, regime, a_t, b_t, params.gamma)
    evaluator = (lambda u: rho_explicit(np.asarray(u, dtype=float), regime,
                                        a_t, b_t, params.gamma))
    if regime.tag == NEUMANN:
        boundary = (0.5 * (a_t + b_t), 0.5 * (a_t + b_t))
    else:
        boundary = (a_t, b_t)
    return _continuum_from_values(grid, rho, np.zeros_like(grid),
                                  np.zeros(len(grid), dtype=bool), regime,
                                  "closed_form", a_t, b_t, phi_a + phi_b,
                                  thermo, evaluator, boundary)


def rho_extrapolated(params_base: ModelParams, regime: Regime,
                     N_sequence: Sequence[int],
                     thermo: Optional[ThermoTables] = None,
                     grid: Optional[np.ndarray] = None,
                     family: Optional[DiscreteProfileFamily] = None
                     ) -> ContinuumProfile:
    """Large-N limit of phi_N / (phi_alpha + phi_beta) on the grid."""
    if regime.tag not in EXTRAPOLATED_REGIMES:
        raise DomainError(
            f"regime {regime.tag} has a closed form; use rho_closed_form")
    thermo = thermo or params_base.make_thermo()
    grid = default_grid() if grid is None else grid
    if family is None:
        family = DiscreteProfileFamily.solve(params_base, N_sequence, thermo)
    rho, err, warn = family.rho_array(grid)
    a_t, b_t = tilde_densities(family.phi_alpha, family.phi_beta)
    boundary = (family.edge_limit("left"), family.edge_limit("right"))
    evaluator = lambda us: family.rho_array(np.atleast_1d(
        np.asarray(us, dtype=float)))[0]
    return _continuum_from_values(grid, rho, err, warn, regime,
                                  "extrapolated", a_t, b_t, family.phi_sum,
                                  thermo, evaluator, boundary)


def profile_for_regime(params_base: ModelParams, N_sequence: Sequence[int],
                       thermo: Optional[ThermoTables] = None,
                       grid: Optional[np.ndarray] = None) -> ContinuumProfile:
    """Classify and produce the continuum profile by the right route."""
    kernel = params_base.kernel_params()
    regime = classify_regime(params_base.gamma, params_base.theta,
                             params_base.kappa, kernel)
    if regime.tag in EXTRAPOLATED_REGIMES:
        return rho_extrapolated(params_base, regime, N_sequence, thermo, grid)
    return rho_closed_form(params_base, regime, thermo, grid)


# -- weak formulations ----------------------------------------------------

def compact_bump(a: float = 0.05, b: float = 0.95,
                 modulation: Optional[Callable] = None) -> Callable:
    """Smooth test function supported in [a, b] (exp(-1/((u-a)(b-u))),
    normalized to peak 1, optionally modulated)."""
    peak = math.exp(-1.0 / ((0.5 * (b - a)) ** 2))

    def G(u):
        u_arr = np.asarray(u, dtype=float)
        inside = (u_arr > a) & (u_arr < b)
        out = np.zeros_like(u_arr)
        prod = (u_arr[inside] - a) * (b - u_arr[inside])
        out[inside] = np.exp(-1.0 / prod) / peak
        if modulation is not None:
            out = out * modulation(u_arr)
        return out

    return G


def _laplacian_pairing(rho_at: Callable, G: Callable, kernel: KernelParams,
                       level: int = 1) -> float:
    """<rho, L G> over [0,1]; endpoint panels follow the u^(1-gamma)
    growth of L G via exponential substitution."""
    gam = kernel.gamma
    n_nodes = 8 + 2 * level

    def integrand(us):
        lg = np.array([regional_frac_laplacian(kernel, G, float(u))
                       for u in us])
        return np.asarray(rho_at(us), dtype=float) * lg

    total = 0.0
    a, b = 0.25, 0.75
    interior = np.linspace(a, b, 4 * level + 1)
    total += integrate_panels(integrand, interior, n=n_nodes)
    # Exponential substitution toward each endpoint.  The span is capped so
    # u stays representably inside (0,1); the remaining sliver [0, t0) is
    # added analytically from the leading u^(1-gamma) growth of L G.
    y_span = min(max(40.0, 19.0 / (2.0 - gam)), math.log(a / 1e-13))
    edges = np.linspace(0.0, y_span, int(math.ceil(y_span / 3.0)) + 1)
    for anchor, sign in ((a, +1.0), (1.0 - b, -1.0)):
        origin = 0.0 if sign > 0 else 1.0

        def sub(y, anchor=anchor, sign=sign, origin=origin):
            t = anchor * np.exp(-y)
            return integrand(origin + sign * t) * t

        total += integrate_panels(sub, edges, n=n_nodes)
        t0 = anchor * math.exp(-y_span)
        total += float(integrand(np.array([origin + sign * t0]))[0]) \
            * t0 / (2.0 - gam)
    return total


def _reaction_pairing(rho_at: Callable, G: Callable, kernel: KernelParams,
                      a_t: float, b_t: float, level: int = 1) -> float:
    """<G, V0> - <rho, G V1>, for test functions vanishing at the ends."""
    gam = kernel.gamma
    gv = vectorized(G)
    pref = kernel.c_gamma / gam

    def integrand(us):
        g = gv(us)
        out = np.zeros_like(us)
        idx = g != 0.0
        if np.any(idx):
            u = us[idx]
            rm = pref * u ** -gam
            rp = pref * (1.0 - u) ** -gam
            v0 = a_t * rm + b_t * rp
            v1 = rm + rp
            out[idx] = g[idx] * (v0 - np.asarray(rho_at(u), dtype=float) * v1)
        return out

    edges = np.linspace(0.0, 1.0, 32 * level + 1)
    return integrate_panels(integrand, edges, n=6 + 2 * level)


def weak_form_residual(profile: ContinuumProfile, G: Callable, regime: Regime,
                       kernel: KernelParams, level: int = 1) -> float:
    """|F(rho, G)| for the regime's weak formulation.

    RD/Dirichlet require test functions supported inside (0,1); Robin and
    Neumann accept arbitrary smooth G and add/omit the boundary term.
    ``level`` refines the quadrature (panels and nodes).
    """
    if regime.tag in (REACTION_DIFFUSION, DIRICHLET):
        gv = vectorized(G)
        ends = gv(np.array([0.0, 1.0]))
        if np.max(np.abs(ends)) > 1e-12:
            raise DomainError(
                f"{regime.tag} weak form needs test functions supported "
                "inside (0,1)")
    rho_at = profile.rho_at()
    pairing = _laplacian_pairing(rho_at, G, kernel, level)
    if regime.tag == DIRICHLET or regime.tag == NEUMANN:
        return abs(pairing)
    if regime.tag == REACTION_DIFFUSION:
        reaction = _reaction_pairing(rho_at, G, kernel,
                                     profile.alpha_tilde, profile.beta_tilde,
                                     level)
        return abs(pairing + regime.kappa_hat * reaction)
    if regime.tag == ROBIN:
        # Boundary term enters with +kappa_hat: the stationarity identity
        # 0 = <rho, L G> + kappa_hat [G(0)(a~-rho(0)) + G(1)(b~-rho(1))]
        # fixes the sign (the Robin functional is sometimes quoted with the
        # opposite one, which no profile satisfies).
        gv = vectorized(G)
        r0, r1 = profile.boundary_values()
        g0 = float(gv(np.array([0.0]))[0])
        g1 = float(gv(np.array([1.0]))[0])
        boundary = (g0 * (profile.alpha_tilde - r0)
                    + g1 * (profile.beta_tilde - r1))
        return abs(pairing + regime.kappa_hat * boundary)
    raise DomainError(f"no weak form for regime {regime.tag}")


def hydrostatic_average(discrete: FugacityProfile, continuum: ContinuumProfile,
                        G: Callable, F: Callable) -> tuple[float, float, float]:
    """Discrete average (1/#Lambda_N) sum G(x/N) F(phi_N(x), x/N), its
    continuum counterpart int G(u) F(phi_sum rho(u), u) du, and their gap.

    F must be Lipschitz in its first argument on the fugacity range.
    """
    gv = vectorized(G)
    N = discrete.params.N
    xs = np.arange(1, N, dtype=float) / N
    disc = float(np.mean(gv(xs) * F(discrete.values, xs)))
    rho_at = continuum.rho_at()

    def integrand(us):
        return gv(us) * F(continuum.phi_sum * np.asarray(rho_at(us)), us)

    edges = np.concatenate([
        np.geomspace(1e-12, 0.1, 24), np.linspace(0.1, 0.9, 33)[1:],
        1.0 - np.geomspace(0.1, 1e-12, 24)[1:]])
    cont = integrate_panels(integrand, np.concatenate([[0.0], edges, [1.0]]),
                            n=10)
    return disc, cont, abs(disc - cont)


# -- serialization ---------------------------------------------------------

def write_continuum_csv(profile: ContinuumProfile, path) -> None:
    lines = [
        f"# regime = {profile.regime.tag}",
        f"# kappa_hat = {profile.regime.kappa_hat!r}",
        f"# provenance = {profile.provenance}",
        f"# alpha_tilde = {profile.alpha_tilde!r}",
        f"# beta_tilde = {profile.beta_tilde!r}",
        f"# phi_sum = {profile.phi_sum!r}",
        "u,rho,m,err_estimate",
    ]
    for u, r, m, e in zip(profile.grid, profile.rho, profile.m,
                          profile.err_estimate):
        lines.append(f"{float(u)!r},{float(r)!r},{float(m)!r},{float(e)!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def read_continuum_csv(path) -> ContinuumProfile:
    header = {}
    rows = []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            key, _, val = raw[1:].partition("=")
            header[key.strip()] = val.strip()
        elif raw and not raw.startswith("u,"):
            rows.append([float(v) for v in raw.split(",")])
    data = np.array(rows)
    regime = Regime(header["regime"], float(header["kappa_hat"]))
    return ContinuumProfile(
        grid=data[:, 0], rho=data[:, 1], m=data[:, 2], regime=regime,
        provenance=header["provenance"], err_estimate=data[:, 3],
        alpha_tilde=float(header["alpha_tilde"]),
        beta_tilde=float(header["beta_tilde"]),
        phi_sum=float(header["phi_sum"]))
