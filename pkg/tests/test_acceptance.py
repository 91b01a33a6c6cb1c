"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line (run with ``pytest -s tests/test_acceptance.py`` to see them all).

Tolerances are pinned here, not configurable.
"""

import time

import numpy as np
import pytest

from zrlab import current as C
from zrlab import hydrostatic as H
from zrlab import ldp as L
from zrlab import mc
from zrlab.kernel import KernelParams
from zrlab.thermo import RateFunction, ThermoTables
from zrlab.traffic import (ModelParams, assemble, solve_direct,
                           solve_iterative)


def _verdict(name, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def thermo():
    return ThermoTables.create(RateFunction.identity())


def params_for(gamma, theta, N, alpha=0.4, beta=1.6,
               rate=RateFunction.identity(), **kw):
    return ModelParams(gamma=gamma, theta=theta, kappa=1.0, alpha=alpha,
                       beta=beta, N=N, rate=rate, **kw)


def test_01_traffic_equation_exactness(thermo):
    start = time.time()
    worst_res, worst_sym = 0.0, 0.0
    n_sets = 0
    for gamma in (0.5, 1.0, 1.5):
        for theta in (-1.0, 0.0, gamma - 1.0, 1.0):
            n_sets += 1
            for N in (256, 1024):
                params = params_for(gamma, theta, N)
                system = assemble(params, thermo)
                prof = solve_direct(system)
                scale = max(1.0, float(np.max(np.abs(system.rhs))))
                worst_res = max(worst_res, prof.residual_norm / scale)
                assert prof.within_bounds(), (gamma, theta, N)
                worst_sym = max(worst_sym, prof.symmetry_gap())
    elapsed = time.time() - start
    ok = worst_res < 1e-11 and worst_sym < 1e-10 and elapsed < 30.0
    _verdict("acceptance-01 traffic exactness",
             ok, f"{n_sets} parameter sets x N in (256,1024); "
                 f"max residual {worst_res:.2e}, max symmetry gap "
                 f"{worst_sym:.2e}, bounds hold, {elapsed:.1f}s")


def test_02_brute_force_oracle(thermo):
    start = time.time()
    params = params_for(1.2, 0.0, 3, alpha=0.6, beta=1.4)
    _pi, _prod, tv, leak = mc.exact_stationary_distribution(params, thermo,
                                                            kmax=40)
    elapsed = time.time() - start
    ok = tv < 1e-6 and leak < 1e-10 and elapsed < 5.0
    _verdict("acceptance-02 brute-force oracle",
             ok, f"N=3 truncated chain vs product measure: TV {tv:.2e}, "
                 f"leakage {leak:.2e}, {elapsed:.1f}s")


def test_03_static_mapping(thermo):
    start = time.time()
    params = params_for(1.2, 0.0, 64)
    system = assemble(params, thermo)
    prof = solve_direct(system)
    report = mc.mapping_check(params, prof, seeds=(1234, 5678),
                              t_burn=2000.0, t_sample=33000.0,
                              thermo=thermo)
    elapsed = time.time() - start
    ok = (report.passed and report.events_zr >= 10 ** 6
          and report.events_ex >= 10 ** 6 and elapsed < 300.0)
    _verdict("acceptance-03 static mapping",
             ok, f"{report.fraction_ok:.1%} of sites within 3 sigma "
                 f"(zr {report.events_zr} events, ex {report.events_ex} "
                 f"events), {elapsed:.0f}s")


def test_04_hydrostatics_explicit_ratio(thermo):
    start = time.time()
    regime = H.classify_regime(1.5, -1.0)
    us = np.linspace(0.1, 0.9, 81)
    sups = []
    for N in (512, 1024, 2048, 4096):
        params = params_for(1.5, -1.0, N)
        prof = solve_direct(assemble(params, thermo))
        a_t, b_t = H.tilde_densities(prof.phi_alpha, prof.phi_beta)
        vals = np.array([prof.phi_at(min(max(int(u * N), 1), N - 1))
                         for u in us]) / (prof.phi_alpha + prof.phi_beta)
        target = H.rho_explicit(us, regime, a_t, b_t, 1.5)
        sups.append(float(np.max(np.abs(vals - target))))
    elapsed = time.time() - start
    monotone = all(b < a for a, b in zip(sups[:-1], sups[1:]))
    ok = monotone and sups[-1] < 1e-2 and elapsed < 120.0
    _verdict("acceptance-04 hydrostatics theta<0",
             ok, f"sup gaps {['%.2e' % s for s in sups]} monotone={monotone},"
                 f" final < 1e-2, {elapsed:.0f}s")


def test_05_neumann_regime(thermo):
    start = time.time()
    sups = []
    for N in (2048, 4096, 8192):
        params = params_for(0.5, 1.0, N)
        system = assemble(params, thermo)
        prof = solve_iterative(system)
        xs = np.arange(1, N)
        mask = (xs >= 0.2 * N) & (xs <= 0.8 * N)
        mid = 0.5
        vals = prof.values[mask] / (prof.phi_alpha + prof.phi_beta)
        sups.append(float(np.max(np.abs(vals - mid))))
    elapsed = time.time() - start
    monotone = all(b < a for a, b in zip(sups[:-1], sups[1:]))
    ok = monotone and sups[-1] < 2e-2 and elapsed < 180.0
    _verdict("acceptance-05 Neumann regime",
             ok, f"iterative solver, sup distances {['%.1e' % s for s in sups]}"
                 f" decreasing={monotone}, final < 2e-2, {elapsed:.0f}s")


def test_06_fick_law_closed_form(thermo):
    start = time.time()
    base = params_for(0.5, -0.5, 2)
    sweep = C.fick_sweep(base, (1024, 2048, 4096), thermo)
    elapsed = time.time() - start
    ok = sweep.rel_err is not None and sweep.rel_err < 0.02 and elapsed < 120.0
    _verdict("acceptance-06 Fick's law theta<0",
             ok, f"extrapolated {sweep.extrapolated:.6f} vs closed form "
                 f"{sweep.closed_form:.6f} (rel err {sweep.rel_err:.2%}), "
                 f"{elapsed:.0f}s")


def test_07_current_consistency(thermo):
    params = params_for(1.5, 0.0, 1024)
    system = assemble(params, thermo)
    prof = solve_direct(system)
    spread = C.current_report(prof, system).relative_spread()

    flat = params_for(1.5, 0.0, 256, alpha=0.8, beta=0.8)
    s_flat = assemble(flat, thermo)
    zero = float(np.max(np.abs(C.bond_currents(solve_direct(s_flat),
                                               s_flat))))

    fwd = params_for(1.5, 0.0, 256)
    rev = params_for(1.5, 0.0, 256, alpha=1.6, beta=0.4)
    s_f, s_r = assemble(fwd, thermo), assemble(rev, thermo)
    w_f = C.bond_currents(solve_direct(s_f), s_f)
    w_r = C.bond_currents(solve_direct(s_r), s_r)
    anti = float(np.max(np.abs(w_f + w_r)) / np.max(np.abs(w_f)))

    ok = spread < 1e-10 and zero < 1e-13 and anti < 1e-12
    _verdict("acceptance-07 current consistency",
             ok, f"bond spread {spread:.2e}, equilibrium current {zero:.2e}, "
                 f"swap antisymmetry {anti:.2e}")


WEAK_REGIMES = ((H.REACTION_DIFFUSION, 0.0), (H.DIRICHLET, 0.25),
                (H.ROBIN, 0.5))

COMPACT_BASIS = (
    H.compact_bump(),
    H.compact_bump(modulation=lambda u: np.sin(3.0 * u)),
    H.compact_bump(modulation=lambda u: 2.0 * u - 1.0),
    H.compact_bump(modulation=lambda u: (2.0 * u - 1.0) ** 2),
    H.compact_bump(modulation=lambda u: np.cos(2.0 * u)),
)

SMOOTH_BASIS = (
    lambda u: np.ones_like(np.asarray(u, dtype=float)),
    lambda u: np.asarray(u, dtype=float),
    lambda u: np.asarray(u, dtype=float) ** 2,
    lambda u: np.sin(np.pi * np.asarray(u, dtype=float)),
    lambda u: np.cos(2.0 * np.pi * np.asarray(u, dtype=float)),
)


def test_08_weak_form_residuals(thermo):
    start = time.time()
    kernel = KernelParams.create(1.5)
    details = []
    all_ok = True
    for tag, theta in WEAK_REGIMES:
        regime = H.classify_regime(1.5, theta, 1.0, kernel)
        base = params_for(1.5, theta, 2)
        coarse = H.rho_extrapolated(base, regime, (512, 1024, 2048), thermo)
        fine = H.rho_extrapolated(base, regime, (2048, 4096, 8192), thermo)
        basis = COMPACT_BASIS if tag != H.ROBIN else SMOOTH_BASIS
        r_coarse = [H.weak_form_residual(coarse, G, regime, kernel, level=1)
                    for G in basis]
        r_fine = [H.weak_form_residual(fine, G, regime, kernel, level=2)
                  for G in basis]
        ok = max(r_fine) < 5e-3 and max(r_fine) < max(r_coarse)
        all_ok = all_ok and ok
        details.append(f"{tag}: max {max(r_coarse):.1e}->{max(r_fine):.1e}")
    elapsed = time.time() - start
    _verdict("acceptance-08 weak-form residuals",
             all_ok, "; ".join(details) + f" (all fine-stage < 5e-3, "
             f"decreasing; {elapsed:.0f}s)")


def test_09_large_deviations(thermo):
    start = time.time()
    base = params_for(0.5, 1.0, 2, alpha=0.5, beta=1.5)
    regime = H.classify_regime(0.5, 1.0)
    cont = H.rho_closed_form(base, regime, thermo)
    profiles = {}
    for N in (512, 1024, 2048, 4096):
        params = params_for(0.5, 1.0, N, alpha=0.5, beta=1.5)
        profiles[N] = solve_direct(assemble(params, thermo))
    monotone_all = True
    for G in SMOOTH_BASIS:
        lam = L.lambda_limit(cont, thermo, G)
        gaps = [abs(L.log_mgf_scaled(profiles[N], thermo, G) - lam)
                for N in (512, 1024, 2048, 4096)]
        monotone_all = monotone_all and all(
            b < a for a, b in zip(gaps[:-1], gaps[1:]))

    m_bar = lambda u: np.interp(np.asarray(u, dtype=float), cont.grid, cont.m)
    rate_zero = abs(L.rate_function(m_bar, cont, thermo))

    rng = np.random.default_rng(17)
    fenchel_ok = True
    for _ in range(20):
        coef = rng.normal(scale=0.6, size=4)
        G = lambda u, c=coef: (c[0] + c[1] * np.asarray(u, float)
                               + c[2] * np.asarray(u, float) ** 2
                               + c[3] * np.asarray(u, float) ** 3)
        amp = rng.uniform(-0.4, 0.4)
        k = int(rng.integers(1, 5))
        pi = lambda u, a=amp, kk=k: m_bar(u) * (
            1.0 + a * np.sin(kk * np.pi * np.asarray(u, float)))
        lhs = (L.rate_function(pi, cont, thermo)
               + L.lambda_limit(cont, thermo, G))
        rhs = L.continuum_pairing(pi, cont, G)
        fenchel_ok = fenchel_ok and lhs >= rhs - 1e-9

    G0 = lambda u: np.sin(np.pi * np.asarray(u, float))
    H0 = lambda u: np.asarray(u, float) ** 2
    gd = L.gateaux_derivative(cont, thermo, G0, H0)
    t = 1e-5
    fd = (L.lambda_limit(cont, thermo, lambda u: G0(u) + t * H0(u))
          - L.lambda_limit(cont, thermo, lambda u: G0(u) - t * H0(u))) / (2 * t)
    gateaux_rel = abs(gd - fd) / abs(fd)

    elapsed = time.time() - start
    ok = (monotone_all and rate_zero < 1e-8 and fenchel_ok
          and gateaux_rel < 1e-6)
    _verdict("acceptance-09 large deviations",
             ok, f"gap decreasing over N=512..4096 for 5 functions: "
                 f"{monotone_all}; rate(m_bar) {rate_zero:.1e}; "
                 f"Fenchel-Young 20/20: {fenchel_ok}; Gateaux rel err "
                 f"{gateaux_rel:.1e}; {elapsed:.0f}s")


FIGURE3_REGIMES = ((1.5, -1.0), (1.5, 0.0), (1.5, 0.25), (1.5, 0.5),
                   (0.5, 1.0))


def test_10_figure3_reproduction(tmp_path):
    start = time.time()
    rate = RateFunction.figure3()
    thermo3 = ThermoTables.create(rate)
    expected_mid = thermo3.mean_density(0.5)     # R((0.2+0.8)/2)
    details = []
    all_ok = True
    for gamma, theta in FIGURE3_REGIMES:
        base = ModelParams.from_fugacities(gamma, theta, 1.0, 0.2, 0.8, 2,
                                           rate, thermo=thermo3)
        regime = H.classify_regime(gamma, theta, 1.0,
                                   base.kernel_params())
        if regime.tag in H.EXTRAPOLATED_REGIMES:
            cont = H.rho_extrapolated(base, regime, (512, 1024, 2048),
                                      thermo3)
        else:
            cont = H.rho_closed_form(base, regime, thermo3)
        H.write_continuum_csv(
            cont, tmp_path / f"figure3_{regime.tag}_g{gamma}_t{theta}.csv")
        gap = abs(cont.m[len(cont.grid) // 2] - expected_mid)
        all_ok = all_ok and gap < 1e-8
        details.append(f"{regime.tag}: {gap:.1e}")
    elapsed = time.time() - start
    _verdict("acceptance-10 figure-3 reproduction",
             all_ok, "midpoint identity gaps " + "; ".join(details)
             + f" (all < 1e-8; boundary fugacities 0.2/0.8; {elapsed:.0f}s)")
