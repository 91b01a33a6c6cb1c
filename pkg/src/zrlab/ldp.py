"""Large-deviation functionals of the empirical density in the NESS:
the scaled log moment generating function, its macroscopic limit, the
rate function (non-equilibrium free energy) and the Gateaux derivative.

All of these require an unbounded fugacity range (phi* = +inf); rate
functions with a finite radius are rejected up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError
from .hydrostatic import ContinuumProfile
from .kernel import vectorized
from .quadrature import integrate_panels
from .thermo import ThermoTables
from .traffic import FugacityProfile


@dataclass
class TestFunctionGrid:
    """A continuous G sampled on the lattice and on a quadrature grid."""

    fn: Callable
    lattice: np.ndarray
    quad: np.ndarray
    sup_norm: float

    @classmethod
    def from_callable(cls, G: Callable, N: int,
                      quad_grid: np.ndarray) -> "TestFunctionGrid":
        gv = vectorized(G)
        lattice = gv(np.arange(1, N, dtype=float) / N)
        quad = gv(np.asarray(quad_grid, dtype=float))
        vals = np.concatenate([lattice, quad])
        if not np.all(np.isfinite(vals)):
            raise DomainError("test function produced non-finite values")
        return cls(fn=gv, lattice=lattice, quad=quad,
                   sup_norm=float(np.max(np.abs(vals))))


def _require_unbounded(thermo: ThermoTables, what: str) -> None:
    if not math.isinf(thermo.phi_star):
        raise DomainError(
            f"{what} requires an unbounded fugacity range (phi* = +inf); "
            f"this rate function has phi* = {thermo.phi_star:g}")


def _quad_edges(level: int = 1) -> np.ndarray:
    ends = np.geomspace(1e-10, 0.1, 12 * level)
    mid = np.linspace(0.1, 0.9, 16 * level + 1)
    return np.concatenate([[0.0], ends, mid[1:-1], 1.0 - ends[::-1], [1.0]])


def log_mgf_scaled(profile: FugacityProfile, thermo: ThermoTables,
                   G: Callable) -> float:
    """Lambda_N(G)/N = (1/N) sum_x log[ Z(e^G(x/N) phi_N(x)) / Z(phi_N(x)) ]."""
    _require_unbounded(thermo, "the scaled log-MGF")
    gv = vectorized(G)
    N = profile.params.N
    g_lat = gv(np.arange(1, N, dtype=float) / N)
    total = 0.0
    for gval, phi in zip(g_lat, profile.values):
        total += (thermo.log_partition(math.exp(gval) * phi)
                  - thermo.log_partition(phi))
    return total / N


def lambda_limit(m_bar: ContinuumProfile, thermo: ThermoTables, G: Callable,
                 level: int = 1) -> float:
    """Lambda(G) = int log[ Z(e^G(u) Phi(m(u))) / Z(Phi(m(u))) ] du.

    Phi(m(u)) is (phi_alpha+phi_beta) rho(u) by construction of m.
    """
    _require_unbounded(thermo, "the limiting log-MGF")
    gv = vectorized(G)
    rho_at = m_bar.rho_at()
    phi_sum = m_bar.phi_sum

    def integrand(us):
        phis = phi_sum * np.asarray(rho_at(us), dtype=float)
        gs = gv(us)
        return np.array([
            thermo.log_partition(math.exp(g) * phi)
            - thermo.log_partition(phi)
            for g, phi in zip(gs, phis)])

    return integrate_panels(integrand, _quad_edges(level), n=8)


def lambda_limit_with_error(m_bar: ContinuumProfile, thermo: ThermoTables,
                            G: Callable) -> tuple[float, float]:
    """Value plus a quadrature error estimate from one grid refinement."""
    v1 = lambda_limit(m_bar, thermo, G, level=1)
    v2 = lambda_limit(m_bar, thermo, G, level=2)
    return v2, abs(v2 - v1)


def _as_density_callable(pi, m_bar: ContinuumProfile) -> Callable:
    if callable(pi):
        return vectorized(pi)
    values = np.asarray(pi, dtype=float)
    if values.shape != m_bar.grid.shape:
        raise DomainError("density array must match the profile grid")
    interp = PchipInterpolator(m_bar.grid, values, extrapolate=True)
    return lambda us: interp(np.asarray(us, dtype=float))


def rate_function(pi, m_bar: ContinuumProfile, thermo: ThermoTables,
                  level: int = 1) -> float:
    """Lambda*(pi) = int [ pi log(Phi(pi)/Phi(m)) - log(Z(Phi(pi))/Z(Phi(m))) ] du.

    ``pi`` is a density profile (callable on [0,1] or array on the grid),
    required to stay inside [0, m*).
    """
    _require_unbounded(thermo, "the rate function")
    pi_at = _as_density_callable(pi, m_bar)
    rho_at = m_bar.rho_at()
    phi_sum = m_bar.phi_sum

    def integrand(us):
        pis = np.asarray(pi_at(us), dtype=float)
        if np.any(pis < 0.0) or np.any(pis >= thermo.m_star):
            raise DomainError("density profile leaves [0, m*)")
        phi_m = phi_sum * np.asarray(rho_at(us), dtype=float)
        out = np.empty(len(us))
        for j, (piv, phm) in enumerate(zip(pis, phi_m)):
            php = thermo.fugacity(piv)
            if piv == 0.0:
                ent = 0.0
            else:
                ent = piv * (math.log(php) - math.log(phm))
            out[j] = ent - (thermo.log_partition(php)
                            - thermo.log_partition(phm))
        return out

    return integrate_panels(integrand, _quad_edges(level), n=8)


def continuum_pairing(pi, m_bar: ContinuumProfile, G: Callable,
                      level: int = 1) -> float:
    """<pi, G> = int pi(u) G(u) du on the same quadrature grid."""
    pi_at = _as_density_callable(pi, m_bar)
    gv = vectorized(G)

    def integrand(us):
        return np.asarray(pi_at(us), dtype=float) * gv(us)

    return integrate_panels(integrand, _quad_edges(level), n=8)


def gateaux_derivative(m_bar: ContinuumProfile, thermo: ThermoTables,
                       G: Callable, H: Callable, level: int = 1) -> float:
    """d/dt Lambda(G + tH) at t=0: int R(e^G(u) Phi(m(u))) H(u) du.

    The integrand uses R(e^G Phi(m)) for consistency with Lambda itself;
    tests pin it against central finite differences of lambda_limit.
    """
    _require_unbounded(thermo, "the Gateaux derivative")
    gv = vectorized(G)
    hv = vectorized(H)
    rho_at = m_bar.rho_at()
    phi_sum = m_bar.phi_sum

    def integrand(us):
        phis = phi_sum * np.asarray(rho_at(us), dtype=float)
        gs = gv(us)
        hs = hv(us)
        return np.array([
            thermo.mean_density(math.exp(g) * phi) * h
            for g, phi, h in zip(gs, phis, hs)])

    return integrate_panels(integrand, _quad_edges(level), n=8)
