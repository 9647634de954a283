"""Acceptance gate for the coupled-flow solver laboratory.

Each test exercises one numbered end-to-end claim and prints a single
[PASS]/[FAIL] line carrying the measured quantities next to the tolerance
they are held to, then asserts.  A red test therefore still leaves its
measurement on the terminal.

Criteria 2 and 6 are known quantitative shortfalls of this discretization
(a parameter-regime transition moves an isolated eigenvalue by a factor
close to 3, see README); they are asserted at their stated tolerances and
fail honestly rather than being loosened.
"""

from functools import lru_cache

import numpy as np
import pytest
import scipy.sparse.linalg as spla

import oracles
from sdlab.assembly import PhysParams, assemble_operator, assemble_riesz, assemble_system
from sdlab.frac_interface import interface_operator
from sdlab.mesh import (
    BcConfig,
    build_coupled_mesh,
    side_by_side_domain,
    stacked_domain,
    tag_boundaries,
)
from sdlab.minres import check_convergence_bound, detect_plateaus, minres_solve
from sdlab.mms import ExactSolution, mms_case, run_convergence
from sdlab.precond import DeflatedPreconditioner, build_deflation, build_preconditioner
from sdlab.spaces import build_layout
from sdlab.spectrum import (
    contraction_factor,
    deflated_pencil_eigs,
    generalized_eigs,
    two_interval_hull,
)

GRID = (1e-4, 1.0, 1e4)


def _report(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")


def _spectrum(config, mu, K, nref):
    mesh = build_coupled_mesh(stacked_domain(4), nref)
    tag_boundaries(mesh, config)
    system = assemble_system(mesh, PhysParams(mu=mu, K=K, alpha_bjs=0.5))
    return generalized_eigs(system.A, system.N, n_eliminated=len(system.essential))


@lru_cache(maxsize=None)
def _diagnostic_run(mu, K):
    # finest stacked mesh within the dense-eigensolve budget; shared by
    # criteria 5 and 8
    system = mms_case(2, n0=4, exact=ExactSolution(mu=mu, K=K), config=BcConfig.EN)
    B = build_preconditioner(system)
    spec = generalized_eigs(system.A, system.N, n_eliminated=len(system.essential))
    log = minres_solve(system.A, system.b, B, reduction=1e-12, maxit=3000,
                       diagnostic=True, eigenvalues=spec.eigenvalues)
    return system, spec, log


def test_criterion_1_manufactured_solution_rates(capsys):
    report = run_convergence(nref_max=4, n0=4)
    rates = report.final_rates()
    ok = report.rates_ok()
    pairs = ", ".join(f"{name} {r:.3f}" for name, r in zip(report.ERROR_NAMES, rates))
    _report(capsys, 1, ok,
            f"finest-pair rates {pairs} vs targets 2/2/1/1 (tol 0.15/0.15/0.1/0.1)")
    assert ok, f"convergence rates off target: {pairs}"


def test_criterion_2_conditioning_uniform_over_parameter_grid(capsys):
    ratios = {}
    for config in (BcConfig.NN, BcConfig.EE, BcConfig.NESTAR, BcConfig.ENSTAR):
        kappas = []
        for nref in (0, 1):
            for mu in GRID:
                for K in GRID:
                    spec = _spectrum(config, mu, K, nref)
                    # EE keeps an exact constant-pressure null mode; drop it
                    kappas.append(spec.kappa_eff(1) if config is BcConfig.EE
                                  else spec.kappa())
        ratios[config.value] = max(kappas) / min(kappas)
    ok = all(r <= 2.0 for r in ratios.values())
    detail = ("kappa spread over the (mu, K) grid and two meshes: "
              + ", ".join(f"{name} {r:.2f}" for name, r in ratios.items())
              + " (each <= 2 required)")
    _report(capsys, 2, ok, detail)
    assert ok, detail


def test_criterion_3_unbounded_kappa_but_bounded_kappa_eff(capsys):
    # the preconditioned pencil depends on (mu, K) only through mu*K, so
    # the product sweep is realized as mu = product, K = 1
    results = {}
    for config, prods in ((BcConfig.NE, (1.0, 1e2, 1e4, 1e6)),
                          (BcConfig.EN, (1.0, 1e-2, 1e-4, 1e-6))):
        specs = [_spectrum(config, p, 1.0, 1) for p in prods]
        kap = np.array([s.kappa() for s in specs])
        keff = np.array([s.kappa_eff(1) for s in specs])
        results[config.value] = (kap[-1] / kap[0],
                                 bool(np.all(np.diff(kap) > 0)),
                                 keff.max() / keff.min())
    ok = all(growth >= 10.0 and mono and spread <= 2.0
             for growth, mono, spread in results.values())
    detail = ("; ".join(
        f"{name} kappa x{growth:.0f} over four decades "
        f"(monotone {mono}), kappa_eff spread {spread:.2f}"
        for name, (growth, mono, spread) in results.items())
        + " (growth >= 10, monotone, spread <= 2 required)")
    _report(capsys, 3, ok, detail)
    assert ok, detail


def test_criterion_4_low_permeability_spot_values(capsys):
    kap = _spectrum(BcConfig.EN, 1e4, 1e-4, 1).kappa()
    keff = _spectrum(BcConfig.EN, 1e-4, 1e-4, 1).kappa_eff(1)
    ok = abs(kap - 14.1) <= 0.3 * 14.1 and abs(keff - 13.6) <= 0.3 * 13.6
    _report(capsys, 4, ok,
            f"EN at K=1e-4: kappa(mu=1e4) {kap:.2f} vs reference 14.1, "
            f"kappa_eff(mu=1e-4) {keff:.2f} vs reference 13.6 (tol 30%)")
    assert ok, (kap, keff)


def test_criterion_5_plateau_explained_by_ritz_misconvergence(capsys):
    _, _, log = _diagnostic_run(1e-4, 1e-4)
    windows = detect_plateaus(log.residuals)
    ok_story = False
    story = "no plateau detected"
    if windows:
        lo, hi = windows[0]
        inside = np.asarray(log.Fk)[lo:hi]
        inside = inside[~np.isnan(inside)]
        below = np.flatnonzero(np.asarray(log.Fk) < 1.5)
        ok_story = (inside.size > 0 and inside.min() > 10.0
                    and below.size > 0 and lo < hi <= below[0] < log.iterations)
        finite = inside[np.isfinite(inside)]
        story = (f"plateau [{lo}, {hi}) with F_k > {finite.min():.0f}, "
                 f"F_k first < 1.5 at {below[0] if below.size else 'never'}, "
                 f"converged at {log.iterations}")
    _, _, control = _diagnostic_run(1e4, 1e-4)
    ok_control = not detect_plateaus(control.residuals)
    ok = ok_story and ok_control
    _report(capsys, 5, ok,
            f"EN mu=K=1e-4: {story}; mu=1e4 control plateau-free "
            f"in {control.iterations} iterations")
    assert ok, story


def test_criterion_6_deflation_robust_across_product_sweep(capsys):
    products = 10.0 ** np.arange(-6, 7)
    stats = {}
    for config in (BcConfig.NE, BcConfig.EN):
        its, plateau_count, lam_min = [], 0, {}
        for p in products:
            system = mms_case(1, n0=4, exact=ExactSolution(mu=p, K=1.0),
                              config=config)
            defl = build_deflation(system)
            BW = DeflatedPreconditioner(build_preconditioner(system), defl)
            log = minres_solve(system.A, system.b, BW, reduction=1e-12, maxit=3000)
            its.append(log.iterations)
            plateau_count += bool(detect_plateaus(log.residuals))
            lam_min[p] = abs(deflated_pencil_eigs(system.A, system.N,
                                                  defl).by_magnitude[0])
        its = np.asarray(its)
        spread = (its.max() - its.min()) / its.min()
        ratio = min(lam_min[p] / lam_min[1.0] for p in products)
        stats[config.value] = (spread, plateau_count, ratio)
    ok = all(count == 0 and ratio >= 0.5 and spread <= 0.25
             for spread, count, ratio in stats.values())
    detail = ("deflated sweep mu*K in 1e-6..1e6: " + "; ".join(
        f"{name} plateaus {count}, min eigenvalue ratio {ratio:.2f}, "
        f"iteration spread {100 * spread:.0f}%"
        for name, (spread, count, ratio) in stats.items())
        + " (no plateaus, ratio >= 0.5, spread <= 25% required)")
    _report(capsys, 6, ok, detail)
    assert ok, detail


def test_criterion_7_verification_bundle(capsys):
    params = PhysParams(mu=3.0, K=0.2, alpha_bjs=0.7)

    # (i)-(ii) independent quadrature oracle + exact symmetry, n0=1 meshes
    oracle_err = 0.0
    sym_ok = True
    for domain, config in ((stacked_domain(1), BcConfig.NE),
                           (side_by_side_domain(1), BcConfig.EE)):
        for nref in (0, 1):
            mesh = build_coupled_mesh(domain, nref)
            tag_boundaries(mesh, config)
            lay = build_layout(mesh)
            A = assemble_operator(mesh, lay, params)
            sym_ok = sym_ok and abs(A - A.T).max() == 0.0
            A_ref = oracles.oracle_operator(mesh, lay, params)
            oracle_err = max(oracle_err,
                             np.abs(A.toarray() - A_ref).max() / np.abs(A_ref).max())
            if nref == 0:
                iop = interface_operator(mesh, params, config)
                N = assemble_riesz(mesh, lay, params, iop.matrix)
                N_ref = oracles.oracle_riesz(mesh, lay, params, iop.matrix)
                oracle_err = max(oracle_err,
                                 np.abs(N.toarray() - N_ref).max()
                                 / np.abs(N_ref).max())

    # (iii) preconditioned MINRES against a dense direct solve
    system = mms_case(1, n0=4, config=BcConfig.NE)
    assert system.A.shape[0] <= 2000
    x_it = minres_solve(system.A, system.b, build_preconditioner(system),
                        reduction=1e-14, maxit=3000).x
    x_direct = spla.spsolve(system.A.tocsc(), system.b)
    minres_err = np.linalg.norm(x_it - x_direct) / np.linalg.norm(x_direct)

    # (iv) multiplier-block inverse round trip, both inversion paths
    rng = np.random.default_rng(7)
    mesh2 = build_coupled_mesh(stacked_domain(2), 0)
    round_err = 0.0
    for config in (BcConfig.NE, BcConfig.NN):
        tag_boundaries(mesh2, config)
        for mu, K in ((1.0, 1.0), (1e-4, 1e4), (1e4, 1e-4)):
            op = interface_operator(mesh2, PhysParams(mu=mu, K=K, alpha_bjs=0.5),
                                    config)
            r = rng.standard_normal(op.matrix.shape[0])
            round_err = max(round_err,
                            np.linalg.norm(op.matrix @ op.solve(r) - r)
                            / np.linalg.norm(r))

    # (v) constant-pressure null vector of the pure-essential operator
    mesh_ee = build_coupled_mesh(stacked_domain(4), 0)
    tag_boundaries(mesh_ee, BcConfig.EE)
    sys_ee = assemble_system(mesh_ee, PhysParams(mu=3.0, K=1.0, alpha_bjs=0.5))
    z = np.zeros(sys_ee.layout.total_dofs)
    for name in ("p_S", "p_D", "lam"):
        z[sys_ee.layout.field_slice(name)] = 1.0
    null_err = np.abs(sys_ee.A @ z).max()

    # (vi) manufactured source terms against finite differences
    exact = ExactSolution()
    pts_s = rng.uniform(0.1, 0.9, size=(40, 2))
    f_ref = (-exact.mu * oracles.fd_sym_grad_div(exact.u_S, pts_s)
             + oracles.fd_gradient(exact.p_S, pts_s))
    source_err = np.abs(exact.f_S(pts_s) - f_ref).max() / np.abs(f_ref).max()
    pts_d = pts_s + [0.0, 1.0]
    g_ref = oracles.fd_divergence(exact.u_D, pts_d)
    source_err = max(source_err,
                     np.abs(exact.div_u_D(pts_d) - g_ref).max()
                     / np.abs(g_ref).max())

    checks = {
        "oracle <= 1e-12": oracle_err <= 1e-12,
        "symmetry exact": sym_ok,
        "minres vs direct <= 1e-8": minres_err <= 1e-8,
        "S round trip <= 1e-10": round_err <= 1e-10,
        "EE null <= 1e-12": null_err <= 1e-12,
        "sources vs FD <= 1e-6": source_err <= 1e-6,
    }
    ok = all(checks.values())
    _report(capsys, 7,
            ok,
            f"assembly vs quadrature oracle {oracle_err:.1e}, operator "
            f"bitwise symmetric {sym_ok}, MINRES vs direct {minres_err:.1e}, "
            f"multiplier round trip {round_err:.1e}, constant-pressure null "
            f"{null_err:.1e}, sources vs finite differences {source_err:.1e}")
    assert ok, checks


def test_criterion_8_residual_bound_from_spectral_hull(capsys):
    worst = {}
    for mu, K in ((1e-4, 1e-4), (1e4, 1e-4)):
        system, spec, log = _diagnostic_run(mu, K)
        # one isolated extreme eigenvalue is excluded from the hull and the
        # eliminated identity rows contribute exact unit eigenvalues
        hull = two_interval_hull(spec.eigenvalues, drop=1,
                                 n_unit=len(system.essential))
        worst[(mu, K)] = check_convergence_bound(log, contraction_factor(hull))
    ok = all(w <= 1.0 for w in worst.values())
    detail = ("residuals vs two-interval Chebyshev bound, worst ratio "
              + ", ".join(f"{w:.1e} (mu={mu:g}, K={K:g})"
                          for (mu, K), w in worst.items())
              + " (<= 1 required)")
    _report(capsys, 8, ok, detail)
    assert ok, detail
