"""Block-diagonal Riesz-map preconditioner and near-kernel deflation.

The preconditioner applies the inverse of the assembled block-diagonal
Riesz map: sparse LU solves for the velocity and free-flow pressure
blocks, a diagonal solve for the porous pressure block, and the interface
operator's spectral (or Cholesky) inverse for the multiplier block.

Deflation augments the preconditioner with a rank-m correction built from
near-kernel indicator vectors W:

    z = B r + W E^{-1} W' r,     E = W' (gamma N) W,

where N is the assembled Riesz matrix (the inverse of the preconditioner)
and gamma scales like 1/(mu*K) when the porous pressure block carries the
near-kernel (NE and floating inclusions) and like mu*K when the free-flow
pressure does (EN).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import BcConfig, interface_chains


class BlockPreconditioner:
    """Inverse of the block-diagonal Riesz map."""

    def __init__(self, N, layout, interface_op=None):
        self.N = sp.csr_matrix(N)
        self.layout = layout
        self.interface_op = interface_op
        self._solvers = {}
        for name in ("u_S", "u_D", "p_S"):
            blk = self._block(name)
            if blk.shape[0]:
                self._solvers[name] = spla.splu(blk.tocsc())
        pd = self._block("p_D").diagonal()
        if np.any(pd <= 0):
            raise ValueError("porous pressure block is not positive definite")
        self._pd_diag = pd
        if interface_op is None and layout.sizes["lam"]:
            lam = self._block("lam").toarray()
            self._lam_chol = sla.cho_factor(lam)
        else:
            self._lam_chol = None

    def _block(self, name):
        s = self.layout.field_slice(name)
        return self.N[s, :][:, s]

    def apply(self, r):
        z = np.empty_like(r)
        lay = self.layout
        for name, solver in self._solvers.items():
            s = lay.field_slice(name)
            z[s] = solver.solve(r[s])
        s = lay.field_slice("p_D")
        z[s] = r[s] / self._pd_diag
        s = lay.field_slice("lam")
        if lay.sizes["lam"]:
            if self.interface_op is not None:
                z[s] = self.interface_op.solve(r[s])
            else:
                z[s] = sla.cho_solve(self._lam_chol, r[s])
        return z

    __call__ = apply


def build_preconditioner(system):
    """Preconditioner for an assembled BlockSystem."""
    iop = system.interface_op
    # eliminated multiplier dofs never occur, so the interface inverse is
    # valid whenever no essential dof falls inside the lam block
    return BlockPreconditioner(system.N, system.layout, interface_op=iop)


@dataclass
class Deflation:
    W: np.ndarray            # (n, m) near-kernel indicator vectors
    gamma: float
    E: object                # Cholesky factor of W' (gamma N) W

    @property
    def m(self):
        return self.W.shape[1]

    def correction(self, r):
        return self.W @ sla.cho_solve(self.E, self.W.T @ r)


def deflation_vectors(layout, config):
    """Constant near-kernel indicator vectors for the given layout.

    NE: ones on the porous pressure and multiplier; EN: ones on the
    free-flow pressure and multiplier; MultiInclusion: one vector per
    inclusion (porous pressure of its cells plus its interface loop).
    Other layouts have no near-kernel and return None.
    """
    config = BcConfig(config)
    n = layout.total_dofs
    if config == BcConfig.NE:
        w = np.zeros((n, 1))
        w[layout.field_slice("p_D")] = 1.0
        w[layout.field_slice("lam")] = 1.0
        return w
    if config == BcConfig.EN:
        w = np.zeros((n, 1))
        w[layout.field_slice("p_S")] = 1.0
        w[layout.field_slice("lam")] = 1.0
        return w
    if config == BcConfig.MULTI:
        mesh = layout.mesh
        chains = interface_chains(mesh)
        comps = sorted(c.component for c in chains)
        cols = []
        lam_off = layout.offsets["lam"]
        pd_off = layout.offsets["p_D"]
        cell_comp = mesh.cell_component[layout.darcy_cells]
        lam_pos = 0
        lam_ranges = {}
        for c in chains:
            lam_ranges[c.component] = (lam_pos, lam_pos + len(c.facets))
            lam_pos += len(c.facets)
        for comp in comps:
            w = np.zeros(n)
            w[pd_off + np.nonzero(cell_comp == comp)[0]] = 1.0
            lo, hi = lam_ranges[comp]
            w[lam_off + lo:lam_off + hi] = 1.0
            cols.append(w)
        return np.column_stack(cols)
    return None


def deflation_gamma(params, config):
    config = BcConfig(config)
    if config in (BcConfig.NE, BcConfig.MULTI):
        return 1.0 / (params.mu * params.K)
    if config == BcConfig.EN:
        return params.mu * params.K
    raise ValueError(f"layout {config.value} has no deflation space")


def build_deflation(system, gamma_mult=1.0):
    """Deflation data for a BlockSystem, or None if the layout needs none."""
    W = deflation_vectors(system.layout, system.config)
    if W is None:
        return None
    gamma = gamma_mult * deflation_gamma(system.params, system.config)
    E = W.T @ (system.N @ W) * gamma
    return Deflation(W=W, gamma=gamma, E=sla.cho_factor(E))


class DeflatedPreconditioner:
    """B_W r = B r + W E^{-1} W' r."""

    def __init__(self, base, deflation):
        self.base = base
        self.deflation = deflation

    def apply(self, r):
        z = self.base.apply(r)
        if self.deflation is not None:
            z = z + self.deflation.correction(r)
        return z

    __call__ = apply


def apply_deflated(base, deflation, r):
    return DeflatedPreconditioner(base, deflation).apply(r)
