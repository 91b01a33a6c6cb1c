import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zrlab.errors import DomainError
from zrlab import current as C
from zrlab import hydrostatic as H
from zrlab.kernel import KernelParams
from zrlab.quadrature import integrate_panels
from zrlab.traffic import assemble, solve_direct

from conftest import make_params


def test_bond_independence(solved_256):
    system, prof = solved_256
    report = C.current_report(prof, system)
    assert report.relative_spread() < 1e-10


def test_current_zero_at_equilibrium(thermo_identity):
    params = make_params(1.5, 0.0, 128, alpha=0.7, beta=0.7)
    system = assemble(params, thermo_identity)
    prof = solve_direct(system)
    assert np.max(np.abs(C.bond_currents(prof, system))) < 1e-13


def test_current_sign_regression(thermo_identity):
    # alpha < beta drives net flow toward the left; pinned value from the
    # dense solve at gamma=1.5, theta=0, kappa=1, N=1024
    params = make_params(1.5, 0.0, 1024)
    system = assemble(params, thermo_identity)
    prof = solve_direct(system)
    w1 = C.stationary_current(prof, system, 1)
    assert w1 < 0.0
    assert w1 == pytest.approx(-0.029527470327, rel=1e-6)


def test_current_antisymmetric_under_swap(thermo_identity):
    fwd = make_params(1.2, -0.3, 128, alpha=0.4, beta=1.6)
    rev = make_params(1.2, -0.3, 128, alpha=1.6, beta=0.4)
    s_f = assemble(fwd, thermo_identity)
    s_r = assemble(rev, thermo_identity)
    w_f = C.bond_currents(solve_direct(s_f), s_f)
    w_r = C.bond_currents(solve_direct(s_r), s_r)
    assert np.max(np.abs(w_f + w_r)) < 1e-12 * np.max(np.abs(w_f))


def test_exclusion_proportionality(solved_256):
    system, prof = solved_256
    w_zr = C.bond_currents(prof, system)
    w_ex = C.exclusion_bond_currents(prof, system)
    s = prof.phi_alpha + prof.phi_beta
    assert np.max(np.abs(w_zr - s * w_ex)) < 1e-12 * np.max(np.abs(w_zr))


def test_stationary_current_bond_range(solved_256):
    system, prof = solved_256
    C.stationary_current(prof, system, 1)
    C.stationary_current(prof, system, system.N)
    with pytest.raises(DomainError):
        C.stationary_current(prof, system, 0)
    with pytest.raises(DomainError):
        C.stationary_current(prof, system, system.N + 1)


# -- rescalings ---------------------------------------------------------------

def test_scaling_B_branches():
    assert C.scaling_B(16, 0.0, 1.5) == 16.0 ** -0.5
    assert C.scaling_B(16, -1.0, 0.5) == 16.0 ** 1.5
    assert C.scaling_B(16, 2.0, 1.5) == 16.0 ** -0.5
    with pytest.raises(DomainError):
        C.scaling_B(1, 0.0, 1.5)


def test_h_theta_midpoint_and_antisymmetry():
    kp = KernelParams.create(1.5)
    for theta in (-1.0, 0.0, 0.5):
        assert C.h_theta_fn(0.5, 1.5, theta, 1.0, kp) == 0.0
    with pytest.raises(DomainError):
        C.h_theta_fn(0.0, 1.5, 0.0, 1.0, kp)


@given(st.floats(min_value=1e-3, max_value=0.5))
@settings(max_examples=30)
def test_h_theta_odd(u):
    kp = KernelParams.create(1.4)
    a = C.h_theta_fn(u, 1.4, 0.0, 2.0, kp)
    b = C.h_theta_fn(1.0 - u, 1.4, 0.0, 2.0, kp)
    assert abs(a + b) < 1e-12 * max(1.0, abs(a))


def test_h_theta_closed_value():
    # at theta=0 both indicator branches are active
    kp = KernelParams.create(1.5)
    got = C.h_theta_fn(0.25, 1.5, 0.0, 1.0, kp)
    expected = kp.c_gamma * (1.0 / 1.5 - 2.0) * (0.75 ** -0.5 - 0.25 ** -0.5)
    assert abs(got - expected) < 1e-13
    # gamma = 1 logarithmic branch
    kp1 = KernelParams.create(1.0)
    got1 = C.h_theta_fn(0.25, 1.0, 0.5, 1.0, kp1)
    assert abs(got1 - kp1.c_gamma * (math.log(0.75) - math.log(0.25))) < 1e-13
    assert C.h_theta_fn(0.25, 1.0, -0.5, 1.0, kp1) == 0.0


@pytest.mark.parametrize("gamma", (0.5, 1.0, 1.5, 1.9))
def test_h_theta_integrable(gamma):
    kp = KernelParams.create(gamma)
    edges = np.concatenate([np.geomspace(1e-10, 0.5, 40),
                            1.0 - np.geomspace(0.5, 1e-10, 40)[1:]])
    val = integrate_panels(
        lambda us: np.array([abs(C.h_theta_fn(float(u), gamma, 0.0, 1.0, kp))
                             for u in us]), edges, n=8)
    assert np.isfinite(val) and val < 100.0


def test_fick_constant_values():
    kp = KernelParams.create(0.5)
    assert C.fick_constant(0.2, 0.8, 0.5, 1.0, 1.0, kp) == 0.0
    assert C.fick_constant(0.5, 0.5, 0.5, -1.0, 1.0, kp) == 0.0
    got = C.fick_constant(0.2, 0.8, 0.5, -1.0, 2.0, kp)
    assert abs(got - kp.c_gamma * 2.0 * (-0.6) / (0.5 * 1.5)) < 1e-14


def test_gamma_one_h_constant_consistency():
    # at gamma=1, theta<0 the h-part vanishes and C alone carries the limit
    kp = KernelParams.create(1.0)
    a_t, b_t = 0.25, 0.75
    closed = C.closed_form_limit_zr(a_t, b_t, 1.0, 1.0, kp)
    const = C.fick_constant(a_t, b_t, 1.0, -1.0, 1.0, kp)
    assert abs(closed - const) < 1e-12


# -- macroscopic limits ----------------------------------------------------------

def test_fick_limit_theta_negative(thermo_identity):
    params = make_params(0.5, -0.5, 64)
    kp = KernelParams.create(0.5)
    reg = H.classify_regime(0.5, -0.5)
    prof = H.rho_closed_form(params, reg, thermo_identity)
    fl = C.fick_limit(prof, params, kp)
    assert fl.spread < 1e-6
    assert abs(fl.mean - fl.closed_form) < 1e-6 * abs(fl.closed_form)
    # cross-check against the h-weighted form
    hw = C.h_weighted_limit(prof, 0.5, -0.5, 1.0, kp) * prof.phi_sum
    assert abs(hw - fl.closed_form) < 1e-5 * abs(fl.closed_form)


def test_fick_limit_equilibrium_zero(thermo_identity):
    for theta in (-0.5, 0.3):
        params = make_params(0.5, theta, 64, alpha=0.7, beta=0.7)
        reg = H.classify_regime(0.5, theta)
        prof = H.rho_closed_form(params, reg, thermo_identity)
        fl = C.fick_limit(prof, params)
        assert np.max(np.abs(fl.values)) < 1e-10


def test_fick_limit_theta_zero_u_independent(rd_profile, thermo_identity):
    params = make_params(1.5, 0.0, 1024)
    fl = C.fick_limit(rd_profile, params)
    assert fl.spread < 1e-3
    assert fl.closed_form is None


def test_fick_sweep_matches_closed_form(thermo_identity):
    base = make_params(0.5, -0.5, 2)
    sweep = C.fick_sweep(base, (512, 1024, 2048), thermo_identity)
    assert sweep.rel_err < 0.02
    assert sweep.closed_form < 0.0       # alpha < beta drives negative flow


def test_fick_sweep_equilibrium_rows_zero(thermo_identity):
    base = make_params(0.5, -0.5, 2, alpha=0.7, beta=0.7)
    sweep = C.fick_sweep(base, (64, 128, 256), thermo_identity)
    assert np.max(np.abs(sweep.rescaled)) < 1e-12
    assert abs(sweep.extrapolated) < 1e-12


def test_fick_sweep_neumann_vanishes(thermo_identity):
    # gamma=0.5, theta=1: rescaled current tends to zero
    base = make_params(0.5, 1.0, 2)
    sweep = C.fick_sweep(base, (128, 256, 512, 1024), thermo_identity)
    mags = np.abs(sweep.rescaled)
    assert np.all(np.diff(mags) < 0.0)
    assert mags[-1] < 0.02
    assert abs(sweep.extrapolated) < mags[0]


def test_sweep_csv(tmp_path, thermo_identity):
    base = make_params(0.5, -0.5, 2)
    sweep = C.fick_sweep(base, (64, 128, 256), thermo_identity)
    path = tmp_path / "sweep.csv"
    sweep.to_csv(path, header_lines=["# demo = 1"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# demo = 1"
    assert lines[1].startswith("N,B_N,current,rescaled")
    assert len(lines) == 5
