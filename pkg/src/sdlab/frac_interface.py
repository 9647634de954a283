"""Fractional-order interface operator for the multiplier block.

The multiplier is piecewise constant on the interface facets.  A
finite-volume Laplacian on the facet-midpoint graph (coupling 1/distance
between neighbouring midpoints) plus the facet-length mass matrix defines
a discrete shifted Laplacian; its generalized eigenbasis realizes the
fractional powers.  With M = diag(|F_i|) and (L + M) U = M U diag(d),
U' M U = I, a power s of the shifted Laplacian is the matrix
M U diag(d**s) U' M (s = 0 gives M, s = 1 gives L + M).

The multiplier block is (1/mu) * power(-1/2) + K * power(+1/2).  Endpoint
behaviour of the underlying Laplacian depends on the boundary layout:
`free` endpoints get no extra term, `zero` endpoints add the Dirichlet
ghost coupling 2/|F_end| on the end facet's diagonal.  Closed interface
loops have no endpoints.  When the two fractional terms use different
endpoint conditions, two eigenbases are built and the sum is inverted by
dense Cholesky factorization; otherwise the inverse is applied spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import BcConfig, interface_chains

# endpoint condition for (the (-1/2)-power term, the (+1/2)-power term)
ENDPOINTS = {
    BcConfig.NN: ("free", "zero"),
    BcConfig.EE: ("zero", "free"),
    BcConfig.NESTAR: ("free", "free"),
    BcConfig.NE: ("free", "free"),
    BcConfig.ENSTAR: ("zero", "zero"),
    BcConfig.EN: ("zero", "zero"),
    BcConfig.MULTI: ("free", "free"),
}


@dataclass
class InterfaceSpectralBasis:
    """Eigenpairs of the shifted facet Laplacian against the facet mass."""

    eigenvalues: np.ndarray      # d, ascending, all >= 1
    vectors: np.ndarray          # columns U with U' M U = I
    lengths: np.ndarray          # facet lengths |F_i|
    endpoint: str


def facet_laplacian(mesh, endpoint="free"):
    """Finite-volume graph Laplacian L and facet lengths on the interface."""
    if endpoint not in ("free", "zero"):
        raise ValueError(f"unknown endpoint condition {endpoint!r}")
    chains = interface_chains(mesh)
    sizes = [len(c.facets) for c in chains]
    n = sum(sizes)
    L = np.zeros((n, n))
    lengths = np.empty(n)
    off = 0
    for chain, sz in zip(chains, sizes):
        fl = mesh.facet_lengths(chain.facets)
        mids = mesh.facet_midpoints(chain.facets)
        lengths[off:off + sz] = fl
        pairs = [(k, k + 1) for k in range(sz - 1)]
        if chain.closed:
            pairs.append((sz - 1, 0))
        for i, j in pairs:
            wij = 1.0 / np.linalg.norm(mids[i] - mids[j])
            L[off + i, off + i] += wij
            L[off + j, off + j] += wij
            L[off + i, off + j] -= wij
            L[off + j, off + i] -= wij
        if not chain.closed and endpoint == "zero":
            L[off, off] += 2.0 / fl[0]
            L[off + sz - 1, off + sz - 1] += 2.0 / fl[-1]
        off += sz
    return L, lengths


def build_interface_basis(mesh, endpoint="free"):
    """Generalized eigendecomposition of (L + M, M) on the interface."""
    L, lengths = facet_laplacian(mesh, endpoint)
    M = np.diag(lengths)
    d, U = sla.eigh(L + M, M)
    return InterfaceSpectralBasis(eigenvalues=d, vectors=U, lengths=lengths,
                                  endpoint=endpoint)


def fractional_matrix(basis, power, coeff=1.0):
    """coeff * M U diag(d**power) U' M."""
    MU = basis.lengths[:, None] * basis.vectors
    S = coeff * (MU * basis.eigenvalues[None, :] ** power) @ MU.T
    # gemm rounding is not symmetric; make the certificate exact
    return 0.5 * (S + S.T)


def multiplier_block_matrix(mesh, params, config):
    """Dense multiplier block (1/mu)*power(-1/2) + K*power(+1/2)."""
    return interface_operator(mesh, params, config).matrix


@dataclass
class InterfaceOperator:
    matrix: np.ndarray
    _spectral: object = None      # (basis, s) for single-basis configs
    _chol: object = None

    def solve(self, r):
        """Apply the inverse of the multiplier block."""
        if self._spectral is not None:
            basis, s = self._spectral
            U = basis.vectors
            return U @ ((U.T @ r) / s)
        return sla.cho_solve(self._chol, r)


def interface_operator(mesh, params, config=None):
    """Build the multiplier block and its inverse for the mesh's layout."""
    config = BcConfig(config if config is not None else mesh.config)
    ep_low, ep_high = ENDPOINTS[config]
    mu, K = params.mu, params.K
    basis = build_interface_basis(mesh, ep_low)
    if ep_low == ep_high:
        s = basis.eigenvalues ** -0.5 / mu + K * basis.eigenvalues ** 0.5
        MU = basis.lengths[:, None] * basis.vectors
        S = (MU * s[None, :]) @ MU.T
        # gemm rounding is not symmetric; make the certificate exact
        S = 0.5 * (S + S.T)
        return InterfaceOperator(matrix=S, _spectral=(basis, s))
    basis_high = build_interface_basis(mesh, ep_high)
    S = (fractional_matrix(basis, -0.5, 1.0 / mu)
         + fractional_matrix(basis_high, +0.5, K))
    return InterfaceOperator(matrix=S, _chol=sla.cho_factor(S))


def apply_S_inverse(op, r):
    return op.solve(r)
