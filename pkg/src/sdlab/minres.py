"""Preconditioned MINRES with harmonic Ritz convergence diagnostics.

The solver runs the standard three-term Lanczos/Givens recurrence with an
SPD preconditioner B, minimizing and logging the B-norm of the residual.
Per-iteration Lanczos coefficients are kept so the tridiagonal matrix can
be re-examined afterwards.  In diagnostic mode the Lanczos basis is stored
with full re-orthogonalization and, per iteration, harmonic Ritz values of
the preconditioned operator are extracted from the pencil (T'T extended, T).

Given the true generalized eigenvalues, the per-iteration quantity F_k
measures how much the residual bound degrades while the harmonic Ritz
value closest to the smallest-magnitude eigenvalue has not yet converged:

    F = max_{k>=2} (|theta_1| / |lam_1|) * |lam_1 - lam_k| / |theta_1 - lam_k|

with a +inf sentinel when theta_1 collides with another true eigenvalue.
Together with the two-interval contraction factor rho of the remaining
spectrum this yields the a-posteriori residual bound checked by
`check_convergence_bound`:  r_{m+j} <= 2 * F_m * rho^(j//2) * r_0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class PreconditionerError(ValueError):
    """The preconditioner turned out not to be positive definite."""


@dataclass
class SolveLog:
    x: np.ndarray
    residuals: np.ndarray          # B-norms, index = iteration (0 = initial)
    alphas: np.ndarray             # Lanczos diagonal, alphas[k-1] = alpha_k
    betas: np.ndarray              # betas[k-1] = beta_{k+1}
    reason: str
    theta_min: np.ndarray = None   # smallest-|.| harmonic Ritz per iteration
    Fk: np.ndarray = None
    thetas: list = field(default=None, repr=False)
    ortho_max: float = None
    plateau_windows: list = None

    @property
    def iterations(self):
        return len(self.residuals) - 1

    @property
    def plateau(self):
        return bool(self.plateau_windows)

    def to_csv(self, path):
        """Columns: iteration,residual,theta_min,F_k (blank when undefined)."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "residual", "theta_min", "F_k"])
            for k, r in enumerate(self.residuals):
                th = ""
                fk = ""
                if self.theta_min is not None and k >= 1 and np.isfinite(self.theta_min[k]):
                    th = repr(float(self.theta_min[k]))
                if self.Fk is not None and k >= 1 and not np.isnan(self.Fk[k]):
                    fk = repr(float(self.Fk[k]))
                wr.writerow([k, repr(float(r)), th, fk])


def lanczos_tridiagonal(alphas, betas, k, extended=False):
    """T_k (or the (k+1) x k extension) from the logged coefficients."""
    T = np.zeros((k + 1 if extended else k, k))
    for i in range(k):
        T[i, i] = alphas[i]
        if i + 1 < k:
            T[i + 1, i] = betas[i]
            T[i, i + 1] = betas[i]
    if extended:
        T[k, k - 1] = betas[k - 1]
    return T


def harmonic_ritz(alphas, betas, k):
    """Harmonic Ritz values at step k, sorted by magnitude.

    Eigenvalues theta of the pencil (T'T + beta_{k+1}^2 e_k e_k', T), taken
    as reciprocals of the eigenvalues of (T, T'T + ...) so the definite
    matrix sits on the right; directions with 1/theta == 0 are dropped.
    """
    T = lanczos_tridiagonal(alphas, betas, k)
    G = T @ T
    G[k - 1, k - 1] += betas[k - 1] ** 2
    try:
        w = sla.eigh(T, G, eigvals_only=True)
    except sla.LinAlgError:
        return np.empty(0)
    wmax = np.abs(w).max()
    if wmax == 0.0:
        return np.empty(0)
    theta = 1.0 / w[np.abs(w) > 1e-14 * wmax]
    return theta[np.argsort(np.abs(theta))]


def compute_Fk(theta, eigenvalues, collision_tol=1e-14):
    """Residual-bound degradation factor from harmonic Ritz values.

    `eigenvalues` is the true (nonzero) spectrum of the preconditioned
    operator; `theta` the harmonic Ritz values of one iteration.  Returns
    +inf when the relevant Ritz value collides with a true eigenvalue.
    """
    lams = np.asarray(eigenvalues)
    lams = lams[np.argsort(np.abs(lams))]
    lam1 = lams[0]
    finite = theta[np.isfinite(theta)]
    if len(finite) == 0 or len(lams) < 2:
        return np.nan
    theta1 = finite[np.argmin(np.abs(finite - lam1))]
    rest = lams[1:]
    dens = np.abs(theta1 - rest)
    if np.any(dens < collision_tol):
        return np.inf
    return float(np.max((np.abs(theta1) / np.abs(lam1))
                        * np.abs(lam1 - rest) / dens))


def detect_plateaus(residuals, min_len=10, factor=0.99):
    """Windows of >= min_len consecutive iterations with < 1% reduction.

    Returns [(start, end)] iteration index pairs, residuals[end]/
    residuals[start] covering the slow stretch.
    """
    r = np.asarray(residuals)
    slow = r[1:] > factor * r[:-1]
    windows = []
    start = None
    for k, s in enumerate(slow):
        if s and start is None:
            start = k
        elif not s and start is not None:
            if k - start >= min_len:
                windows.append((start, k))
            start = None
    if start is not None and len(slow) - start >= min_len:
        windows.append((start, len(slow)))
    return windows


def minres_solve(A, b, precond, x0=None, reduction=1e-12, abs_floor=1e-14,
                 maxit=1000, diagnostic=False, eigenvalues=None, reorth=None):
    """Preconditioned MINRES on the symmetric indefinite system A x = b.

    `precond` is a callable applying the SPD preconditioner.  Residual
    norms are preconditioner norms; iteration stops on a relative
    reduction (with an absolute floor against roundoff stagnation), at
    maxit, or on Lanczos breakdown.  With `diagnostic` the Lanczos basis is
    re-orthogonalized and harmonic Ritz values (plus F_k when the true
    `eigenvalues` are supplied) are logged per iteration.
    """
    if reorth is None:
        reorth = diagnostic
    apply_B = precond.apply if hasattr(precond, "apply") else precond
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - A @ x if x0 is not None else np.asarray(b, dtype=float).copy()
    y = apply_B(r1)
    beta1sq = float(r1 @ y)
    _check_definite(beta1sq, r1, y)
    beta1 = np.sqrt(max(beta1sq, 0.0))
    residuals = [beta1]
    alphas, betas = [], []
    theta_min, Fks, thetas_all = [np.nan], [np.nan], [None]
    if beta1 == 0.0:
        if np.linalg.norm(r1) > 0.0:
            raise PreconditionerError(
                "preconditioner annihilated a nonzero residual; "
                "it must be symmetric positive definite")
        return _finalize(x, residuals, alphas, betas, "converged",
                         diagnostic, theta_min, Fks, thetas_all, None)
    target = max(reduction * beta1, abs_floor)

    V = [r1 / beta1] if reorth else None
    Z = [y / beta1] if reorth else None
    oldb, beta = 0.0, beta1
    dbar = epsln = sn = 0.0
    cs = -1.0
    phibar = beta1
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    reason = "maxit"

    for itn in range(1, maxit + 1):
        v = y / beta
        yv = A @ v
        if itn >= 2:
            yv = yv - (beta / oldb) * r1
        alfa = float(v @ yv)
        yv = yv - (alfa / beta) * r2
        if reorth:
            for _ in range(2):
                for vi, zi in zip(V, Z):
                    yv = yv - (zi @ yv) * vi
        r1 = r2
        r2 = yv
        y = apply_B(r2)
        oldb = beta
        betasq = float(r2 @ y)
        _check_definite(betasq, r2, y)
        beta = np.sqrt(max(betasq, 0.0))
        alphas.append(alfa)
        betas.append(beta)
        if reorth and beta > 0.0:
            V.append(r2 / beta)
            Z.append(y / beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), 1e-300)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        residuals.append(abs(phibar))

        if diagnostic:
            theta = harmonic_ritz(np.array(alphas), np.array(betas), itn)
            thetas_all.append(theta)
            theta_min.append(theta[0] if len(theta) else np.nan)
            Fks.append(compute_Fk(theta, eigenvalues)
                       if eigenvalues is not None else np.nan)

        if abs(phibar) <= target:
            reason = "converged"
            break
        if beta <= 1e-14 * beta1:
            reason = "breakdown"
            break

    ortho = None
    if reorth:
        G = np.array([[vi @ zj for zj in Z] for vi in V])
        ortho = float(np.abs(G - np.eye(len(V))).max())
    return _finalize(x, residuals, alphas, betas, reason, diagnostic,
                     theta_min, Fks, thetas_all, ortho)


def _check_definite(inner, r, y):
    scale = np.linalg.norm(r) * np.linalg.norm(y)
    if inner < -1e-12 * max(scale, 1e-300):
        raise PreconditionerError(
            "preconditioner produced a negative inner product "
            f"({inner:.3e}); it must be symmetric positive definite")


def _finalize(x, residuals, alphas, betas, reason, diagnostic,
              theta_min, Fks, thetas_all, ortho):
    residuals = np.array(residuals)
    log = SolveLog(x=x, residuals=residuals,
                   alphas=np.array(alphas), betas=np.array(betas),
                   reason=reason,
                   theta_min=np.array(theta_min) if diagnostic else None,
                   Fk=np.array(Fks) if diagnostic else None,
                   thetas=thetas_all if diagnostic else None,
                   ortho_max=ortho,
                   plateau_windows=detect_plateaus(residuals))
    return log


def check_convergence_bound(log, rho, slack=1.0 + 1e-9):
    """Largest ratio of logged residuals to the F/rho bound.

    For every anchor iteration m with finite F_m and every j >= 0,
    r_{m+j} <= 2 * F_m * rho^(j//2) * r_0 must hold (r_0 is a conservative
    surrogate for the deflated initial residual).  Returns the max ratio;
    values <= 1 (up to `slack`) mean the bound held everywhere.
    """
    if log.Fk is None:
        raise ValueError("bound check needs a diagnostic solve with F_k")
    r = log.residuals
    worst = 0.0
    for m in range(1, len(r)):
        Fm = log.Fk[m] if m < len(log.Fk) else np.nan
        if not np.isfinite(Fm):
            continue
        for j in range(0, len(r) - m):
            bound = 2.0 * Fm * rho ** (j // 2) * r[0]
            if bound <= 0:
                continue
            worst = max(worst, r[m + j] / (bound * slack))
    return worst
