"""Block dof layout for the five-field coupled system.

Field order is fixed: free-flow velocity (vector P2), porous velocity
(lowest-order Raviart-Thomas), free-flow pressure (P1), porous pressure
(P0), interface multiplier (P0 on interface facets).  Entities are
numbered lexicographically (by global vertex / facet id), so the layout is
deterministic for a given mesh.  The P2 vector field is component-blocked:
all x-component scalar dofs first, then all y-components.

Raviart-Thomas dofs are facet-mean normal flux densities, measured along
the facet normal oriented from the lower-indexed adjacent cell to the
higher-indexed one (outward on boundary facets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import LOCAL_EDGES, segment_rule
from .mesh import (DARCY, STOKES, STOKES_ESSENTIAL_TAGS, TAG_DARCY_ESSENTIAL,
                   interface_chains)

FIELDS = ("u_S", "u_D", "p_S", "p_D", "lam")


@dataclass
class BlockLayout:
    mesh: object
    stokes_cells: np.ndarray          # global cell ids
    darcy_cells: np.ndarray
    stokes_vertices: np.ndarray       # global vertex ids, ascending
    stokes_edges: np.ndarray          # (neS, 2) vertex pairs, lexicographic
    stokes_cell_scalar: np.ndarray    # (ncS, 6) scalar P2 dof ids per cell
    darcy_facets: np.ndarray          # global facet ids carrying RT dofs
    darcy_cell_facets: np.ndarray     # (ncD, 3) RT dof ids per cell
    darcy_cell_signs: np.ndarray      # (ncD, 3) orientation signs
    interface_facets: np.ndarray      # global facet ids in chain order
    interface_normals: np.ndarray     # (nlam, 2) Stokes->Darcy normals
    offsets: dict
    sizes: dict

    @property
    def total_dofs(self):
        return sum(self.sizes.values())

    @property
    def num_scalar(self):
        """Scalar P2 dofs per velocity component."""
        return len(self.stokes_vertices) + len(self.stokes_edges)

    def field_slice(self, name):
        off = self.offsets[name]
        return slice(off, off + self.sizes[name])

    def velocity_dof(self, component, scalar_id):
        return self.offsets["u_S"] + component * self.num_scalar + scalar_id

    def scalar_dof_points(self):
        """Coordinates of the P2 scalar dofs (vertices then edge midpoints)."""
        verts = self.mesh.vertices[self.stokes_vertices]
        mids = 0.5 * (self.mesh.vertices[self.stokes_edges[:, 0]]
                      + self.mesh.vertices[self.stokes_edges[:, 1]])
        return np.vstack([verts, mids])


def build_layout(mesh):
    """Number all dofs for the given tagged mesh."""
    stokes_cells = np.nonzero(mesh.cell_subdomain == STOKES)[0]
    darcy_cells = np.nonzero(mesh.cell_subdomain == DARCY)[0]

    stokes_vertices = np.unique(mesh.cells[stokes_cells])
    vmap = {v: i for i, v in enumerate(stokes_vertices)}

    edge_set = set()
    for tri in mesh.cells[stokes_cells]:
        for a, b in LOCAL_EDGES:
            edge_set.add((min(tri[a], tri[b]), max(tri[a], tri[b])))
    stokes_edges = np.array(sorted(edge_set))
    emap = {tuple(e): i for i, e in enumerate(stokes_edges)}

    nv = len(stokes_vertices)
    cell_scalar = np.empty((len(stokes_cells), 6), dtype=int)
    for r, c in enumerate(stokes_cells):
        tri = mesh.cells[c]
        for k in range(3):
            cell_scalar[r, k] = vmap[tri[k]]
        for k, (a, b) in enumerate(LOCAL_EDGES):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            cell_scalar[r, 3 + k] = nv + emap[key]

    darcy_cell_set = set(darcy_cells)
    fset = set()
    for r, c in enumerate(darcy_cells):
        tri = mesh.cells[c]
        for a, b in LOCAL_EDGES:
            fset.add((min(tri[a], tri[b]), max(tri[a], tri[b])))
    pair_to_fid = {tuple(p): f for f, p in enumerate(mesh.facets)}
    darcy_facets = np.array(sorted(pair_to_fid[p] for p in fset))
    fmap = {f: i for i, f in enumerate(darcy_facets)}

    cell_facets = np.empty((len(darcy_cells), 3), dtype=int)
    cell_signs = np.empty((len(darcy_cells), 3), dtype=int)
    for r, c in enumerate(darcy_cells):
        tri = mesh.cells[c]
        for k, (a, b) in enumerate(LOCAL_EDGES):
            pair = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            f = pair_to_fid[pair]
            cell_facets[r, k] = fmap[f]
            cell_signs[r, k] = _orientation_sign(mesh, f, c)

    chains = interface_chains(mesh)
    interface = np.concatenate([ch.facets for ch in chains])
    normals = np.vstack([ch.normals for ch in chains])

    sizes = {
        "u_S": 2 * (nv + len(stokes_edges)),
        "u_D": len(darcy_facets),
        "p_S": nv,
        "p_D": len(darcy_cells),
        "lam": len(interface),
    }
    offsets, off = {}, 0
    for name in FIELDS:
        offsets[name] = off
        off += sizes[name]

    return BlockLayout(mesh=mesh, stokes_cells=stokes_cells,
                       darcy_cells=darcy_cells,
                       stokes_vertices=stokes_vertices,
                       stokes_edges=stokes_edges,
                       stokes_cell_scalar=cell_scalar,
                       darcy_facets=darcy_facets,
                       darcy_cell_facets=cell_facets,
                       darcy_cell_signs=cell_signs,
                       interface_facets=interface,
                       interface_normals=normals,
                       offsets=offsets, sizes=sizes)


def _outward_normal(mesh, f, cell):
    a, b = mesh.vertices[mesh.facets[f]]
    t = b - a
    n = np.array([t[1], -t[0]])
    n /= np.linalg.norm(n)
    centroid = mesh.vertices[mesh.cells[cell]].mean(axis=0)
    if np.dot(n, 0.5 * (a + b) - centroid) < 0:
        n = -n
    return n


def global_facet_normal(mesh, f):
    """Normal fixing the sign of the RT dof on facet f."""
    c0, c1 = mesh.facet_cells[f]
    return _outward_normal(mesh, f, c0 if c1 < 0 else min(c0, c1))


def _orientation_sign(mesh, f, cell):
    n_glob = global_facet_normal(mesh, f)
    n_out = _outward_normal(mesh, f, cell)
    return 1 if np.dot(n_glob, n_out) > 0 else -1


def essential_dofs(layout, config=None):
    """Indices of essentially constrained dofs (sorted, unique).

    P2 velocity dofs (both components) on essentially tagged free-flow
    facets, RT normal-flux dofs on essentially tagged porous facets.
    Interface facets are never constrained.
    """
    mesh = layout.mesh
    vmap = {v: i for i, v in enumerate(layout.stokes_vertices)}
    emap = {tuple(e): i for i, e in enumerate(layout.stokes_edges)}
    fmap = {f: i for i, f in enumerate(layout.darcy_facets)}
    nv = len(layout.stokes_vertices)
    idx = []
    for f in range(len(mesh.facets)):
        tag = mesh.facet_tags[f]
        if tag in STOKES_ESSENTIAL_TAGS:
            a, b = mesh.facets[f]
            scalars = [vmap[a], vmap[b], nv + emap[(min(a, b), max(a, b))]]
            for s in scalars:
                idx.append(layout.velocity_dof(0, s))
                idx.append(layout.velocity_dof(1, s))
        elif tag == TAG_DARCY_ESSENTIAL:
            idx.append(layout.offsets["u_D"] + fmap[f])
    return np.unique(np.array(idx, dtype=int))


def essential_values(layout, dofs, u_S=None, u_D=None):
    """Interpolated values for the constrained dofs.

    u_S maps points (n, 2) to velocities (n, 2) and is sampled at the P2
    nodes; u_D maps points to porous velocities and is reduced to facet-mean
    normal flux densities by Gauss quadrature.  Missing fields give zeros.
    """
    mesh = layout.mesh
    vals = np.zeros(len(dofs))
    if u_S is None and u_D is None:
        return vals
    off_us, n_us = layout.offsets["u_S"], layout.sizes["u_S"]
    ns = layout.num_scalar
    if u_S is not None:
        pts = layout.scalar_dof_points()
        sel = [(i, d) for i, d in enumerate(dofs) if off_us <= d < off_us + n_us]
        if sel:
            loc = np.array([d - off_us for _, d in sel])
            comp = loc // ns
            scal = loc % ns
            uv = u_S(pts[scal])
            vals[[i for i, _ in sel]] = uv[np.arange(len(sel)), comp]
    if u_D is not None:
        off_ud, n_ud = layout.offsets["u_D"], layout.sizes["u_D"]
        t, w = segment_rule(5)
        for i, d in enumerate(dofs):
            if not (off_ud <= d < off_ud + n_ud):
                continue
            f = layout.darcy_facets[d - off_ud]
            a, b = mesh.vertices[mesh.facets[f]]
            n = global_facet_normal(mesh, f)
            pts = a[None, :] + t[:, None] * (b - a)[None, :]
            vals[i] = np.dot(w, u_D(pts) @ n)
    return vals
