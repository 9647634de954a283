"""Manufactured-solution data: internal consistency of the exact fields via
finite differences, solver convergence rates, and the report format."""

import csv

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from sdlab.mesh import BcConfig
from sdlab.mms import ERROR_DEGREE, ExactSolution, MmsReport, compute_errors, mms_case, run_convergence

import oracles


@pytest.fixture
def exact():
    return ExactSolution()


@pytest.fixture
def pts(rng):
    return rng.random((40, 2)) * np.array([1.0, 2.0])


def test_default_parameters(exact):
    assert exact.mu == 3.0 and exact.K == 1.0 and exact.alpha_bjs == 0.5
    assert exact.beta_tau == pytest.approx(0.5 * np.sqrt(3.0))


def test_free_flow_velocity_divergence_free(exact, pts):
    g = exact.grad_u_S(pts)
    div = g[:, 0, 0] + g[:, 1, 1]
    assert np.abs(div).max() < 1e-13
    fd_div = oracles.fd_divergence(exact.u_S, pts)
    assert np.abs(fd_div).max() < 1e-7


def test_gradients_match_finite_differences(exact, pts):
    g = exact.grad_u_S(pts)
    for comp in range(2):
        fd = oracles.fd_gradient(lambda p, c=comp: exact.u_S(p)[:, c], pts)
        assert np.abs(g[:, comp, :] - fd).max() < 1e-8
    fd_p = oracles.fd_gradient(exact.p_D, pts)
    assert np.abs(exact.grad_p_D(pts) - fd_p).max() < 1e-7
    eps = exact.eps_u_S(pts)
    assert np.abs(eps - np.swapaxes(eps, 1, 2)).max() == 0.0


def test_porous_velocity_is_darcy_flux(exact, pts):
    assert np.allclose(exact.u_D(pts), -exact.K * exact.grad_p_D(pts), atol=1e-14)
    fd_div = oracles.fd_divergence(exact.u_D, pts)
    assert np.abs(fd_div - exact.div_u_D(pts)).max() < 1e-5


def test_momentum_balance_finite_difference(exact, pts):
    # f_S = -div(2 mu eps(u_S)) + grad p_S, and div(2 eps(u)) is the
    # vector Laplacian plus the gradient of the divergence
    visc = oracles.fd_sym_grad_div(exact.u_S, pts)
    grad_p = oracles.fd_gradient(exact.p_S, pts)
    f = -exact.mu * visc + grad_p
    scale = np.abs(exact.f_S(pts)).max()
    assert np.abs(f - exact.f_S(pts)).max() < 1e-6 * scale


def test_mass_source_matches_flux_divergence(exact, pts):
    loads = exact.loads()
    assert np.allclose(loads.g_D(pts), exact.div_u_D(pts), atol=1e-14)


def test_interface_defects_compose(exact, rng):
    # stacked geometry interface: y = 1, normal (0, 1), tangent (-1, 0)
    x = rng.random(25)
    pts = np.column_stack([x, np.ones_like(x)])
    n = np.array([0.0, 1.0])
    tau = np.array([-1.0, 0.0])
    eps = exact.eps_u_S(pts)
    enn = np.einsum("i,kij,j->k", n, eps, n)
    etn = np.einsum("i,kij,j->k", tau, eps, n)
    t_n = exact.p_D(pts) - exact.p_S(pts) + 2.0 * exact.mu * enn
    t_t = 2.0 * exact.mu * etn + exact.beta_tau * (exact.u_S(pts) @ tau)
    g_g = (exact.u_S(pts) - exact.u_D(pts)) @ n
    assert np.abs(exact.normal_stress_defect(pts, n) - t_n).max() < 1e-13
    assert np.abs(exact.slip_defect(pts, n, tau) - t_t).max() < 1e-13
    assert np.abs(exact.mass_defect(pts, n) - g_g).max() < 1e-13
    # the slip defect is tangent-sign invariant up to the linear term's sign
    loads = exact.loads()
    assert np.abs(loads.t_n(pts, n) - t_n).max() < 1e-13
    assert np.abs(loads.g_gamma(pts, n) - g_g).max() < 1e-13


def test_stress_boundary_data(exact, rng):
    # traction callable returns (2 mu eps - p I) n
    x = rng.random(10)
    pts = np.column_stack([x, np.zeros_like(x)])
    n = np.array([0.0, -1.0])
    sn = exact.stokes_stress_n(pts, n)
    eps = exact.eps_u_S(pts)
    expect = 2.0 * exact.mu * np.einsum("kij,j->ki", eps, n) - exact.p_S(pts)[
        :, None
    ] * n
    assert np.abs(sn - expect).max() < 1e-13
    loads = exact.loads()
    got = loads.stokes_traction(pts, n, "stokes_natural")
    assert np.abs(got - sn).max() == 0.0


def test_errors_shrink_under_refinement():
    errs = []
    for nref in (0, 1):
        system = mms_case(nref, n0=4)
        x = spla.spsolve(system.A.tocsc(), system.b)
        errs.append(compute_errors(system, x, ExactSolution()))
    errs = np.array(errs)
    assert (errs > 0).all()
    ratio = errs[0] / errs[1]
    # second order for the velocity/pressure pair, first order for the
    # porous fields; generous brackets at these coarse levels
    assert ratio[0] > 2.5 and ratio[1] > 2.5
    assert ratio[2] > 1.5 and ratio[3] > 1.5
    assert ERROR_DEGREE >= 6


def test_mms_case_respects_config():
    system = mms_case(0, n0=4, config=BcConfig.EN)
    assert system.mesh.config is BcConfig.EN
    # essential side carries interpolated manufactured data, not zeros
    assert np.abs(system.essential_vals).max() > 0.1


def test_run_convergence_report(tmp_path):
    report = run_convergence(nref_max=1, n0=2)
    assert report.levels == [0, 1]
    assert report.errors.shape == (2, 4)
    assert np.allclose(report.h, [np.sqrt(2.0) / 2.0, np.sqrt(2.0) / 4.0])
    r = report.rates()
    assert r.shape == (1, 4)
    path = tmp_path / "table.csv"
    report.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:2] == ["nref", "h"]
    for name in MmsReport.ERROR_NAMES:
        assert name in header
        assert name + "_rate" in header
    assert len(rows) == 3
    # first level has no rate entries
    first = dict(zip(header, rows[1]))
    assert first[MmsReport.ERROR_NAMES[0] + "_rate"] == ""
    second = dict(zip(header, rows[2]))
    assert float(second["h"]) == pytest.approx(np.sqrt(2.0) / 4.0)
