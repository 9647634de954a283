"""Structured two-subdomain triangle meshes with tagged boundaries.

The geometry is a free-flow rectangle coupled to one or more porous
rectangles, either through a single shared edge (side-by-side / stacked
layouts) or as inclusions floating strictly inside the free-flow region.
All rectangles are meshed together on one uniform lattice of squares of
side 1/(n0 * 2^nref), each square split into two triangles by the
lower-left to upper-right diagonal, so the coupled mesh is conforming and
interface facets are full lattice edges.

Facet tags select the boundary-condition layout.  The six named layouts
are labelled by the condition type met on either side of the interface
corner: first letter = free-flow side, second letter = porous side,
with N = natural (traction / pressure) and E = essential (velocity /
flux).  The starred variants flip the condition on the far (non-interface)
edge of the porous or free-flow rectangle, which removes the near-singular
pressure mode of the unstarred layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

STOKES = 0
DARCY = 1

TAG_NONE = ""
TAG_INTERFACE = "interface"
TAG_STOKES_ESSENTIAL = "stokes_essential"
TAG_STOKES_NATURAL = "stokes_natural"
TAG_DARCY_ESSENTIAL = "darcy_essential"
TAG_DARCY_NATURAL = "darcy_natural"
TAG_INFLOW = "inflow"
TAG_OUTFLOW = "outflow"
TAG_WALL = "wall"

# tags implying an essential (resp. natural) condition for the velocity field
STOKES_ESSENTIAL_TAGS = frozenset({TAG_STOKES_ESSENTIAL, TAG_WALL})
STOKES_NATURAL_TAGS = frozenset({TAG_STOKES_NATURAL, TAG_INFLOW, TAG_OUTFLOW})


class ConfigurationError(ValueError):
    """Raised for inconsistent domain or boundary-condition requests."""


class BcConfig(str, Enum):
    NN = "NN"
    EE = "EE"
    NESTAR = "NEstar"
    ENSTAR = "ENstar"
    NE = "NE"
    EN = "EN"
    MULTI = "MultiInclusion"


# per config: tag applied to (stokes adjacent-to-interface edges, stokes far
# edge, darcy adjacent edges, darcy far edge).  "Adjacent" edges touch the
# endpoints of the interface, the "far" edge is opposite it.
_EDGE_TAGS = {
    BcConfig.NN: (TAG_STOKES_NATURAL, TAG_STOKES_ESSENTIAL,
                  TAG_DARCY_NATURAL, TAG_DARCY_ESSENTIAL),
    BcConfig.EE: (TAG_STOKES_ESSENTIAL, TAG_STOKES_ESSENTIAL,
                  TAG_DARCY_ESSENTIAL, TAG_DARCY_ESSENTIAL),
    BcConfig.NESTAR: (TAG_STOKES_NATURAL, TAG_STOKES_ESSENTIAL,
                      TAG_DARCY_ESSENTIAL, TAG_DARCY_NATURAL),
    BcConfig.ENSTAR: (TAG_STOKES_ESSENTIAL, TAG_STOKES_NATURAL,
                      TAG_DARCY_NATURAL, TAG_DARCY_ESSENTIAL),
    BcConfig.NE: (TAG_STOKES_NATURAL, TAG_STOKES_ESSENTIAL,
                  TAG_DARCY_ESSENTIAL, TAG_DARCY_ESSENTIAL),
    BcConfig.EN: (TAG_STOKES_ESSENTIAL, TAG_STOKES_ESSENTIAL,
                  TAG_DARCY_NATURAL, TAG_DARCY_ESSENTIAL),
}

_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    """Rectangles making up the coupled domain.

    Rectangles are (x0, y0, x1, y1) with corners on the lattice of spacing
    1/base_divisions.  Every porous rectangle either shares exactly one full
    edge with the free-flow rectangle or lies strictly inside it (an
    inclusion).
    """

    stokes_rect: tuple
    darcy_rects: tuple
    base_divisions: int = 4


def side_by_side_domain(n0=4):
    """Unit free-flow square with the porous square to its right."""
    return DomainSpec((0.0, 0.0, 1.0, 1.0), ((1.0, 0.0, 2.0, 1.0),), n0)


def stacked_domain(n0=4):
    """Unit free-flow square with the porous square on top."""
    return DomainSpec((0.0, 0.0, 1.0, 1.0), ((0.0, 1.0, 1.0, 2.0),), n0)


@dataclass
class InterfaceChain:
    """One connected interface component, facets in traversal order."""

    facets: np.ndarray          # global facet ids
    normals: np.ndarray         # (n, 2) unit normals pointing Stokes -> Darcy
    closed: bool
    component: int              # porous-rectangle index


@dataclass
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    cells: np.ndarray           # (nc, 3) CCW vertex ids
    cell_subdomain: np.ndarray  # (nc,) STOKES or DARCY
    cell_component: np.ndarray  # (nc,) porous-rectangle index, -1 for Stokes
    facets: np.ndarray          # (nf, 2) sorted vertex id pairs
    facet_cells: np.ndarray     # (nf, 2) adjacent cell ids, -1 if none
    facet_tags: np.ndarray      # (nf,) strings, "" for untagged interior
    facet_component: np.ndarray  # (nf,) porous component of interface facets
    spacing: float
    domain: DomainSpec
    nref: int
    config: BcConfig | None = None
    _chains: list = field(default=None, repr=False)

    @property
    def h(self):
        return self.spacing * np.sqrt(2.0)

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_coords(self, cell_ids=None):
        ids = slice(None) if cell_ids is None else cell_ids
        return self.vertices[self.cells[ids]]

    def cell_areas(self):
        c = self.cell_coords()
        return 0.5 * np.abs(
            (c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
            - (c[:, 2, 0] - c[:, 0, 0]) * (c[:, 1, 1] - c[:, 0, 1]))

    def facet_lengths(self, facet_ids=None):
        ids = slice(None) if facet_ids is None else facet_ids
        p = self.vertices[self.facets[ids]]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def facet_midpoints(self, facet_ids=None):
        ids = slice(None) if facet_ids is None else facet_ids
        p = self.vertices[self.facets[ids]]
        return 0.5 * (p[:, 0] + p[:, 1])


def _lattice_coord(value, n0, scale, what):
    k = value * n0
    if abs(k - round(k)) > _LATTICE_TOL * max(1.0, abs(k)):
        raise ConfigurationError(
            f"{what} coordinate {value} is not on the lattice of spacing 1/{n0}")
    return int(round(value * n0)) * scale


def _lattice_rect(rect, n0, scale, what):
    x0, y0, x1, y1 = rect
    i0 = _lattice_coord(x0, n0, scale, what)
    j0 = _lattice_coord(y0, n0, scale, what)
    i1 = _lattice_coord(x1, n0, scale, what)
    j1 = _lattice_coord(y1, n0, scale, what)
    if i1 <= i0 or j1 <= j0:
        raise ConfigurationError(f"{what} rectangle {rect} is empty or inverted")
    return i0, j0, i1, j1


def _classify_darcy(srect, drect):
    """Return 'inclusion' or the shared-edge side 'left|right|bottom|top'
    (side named from the Stokes rectangle's point of view)."""
    I0, J0, I1, J1 = srect
    i0, j0, i1, j1 = drect
    if I0 < i0 and i1 < I1 and J0 < j0 and j1 < J1:
        return "inclusion"
    same_x = (i0, i1) == (I0, I1)
    same_y = (j0, j1) == (J0, J1)
    if i0 == I1 and same_y:
        return "right"
    if i1 == I0 and same_y:
        return "left"
    if j0 == J1 and same_x:
        return "top"
    if j1 == J0 and same_x:
        return "bottom"
    raise ConfigurationError(
        "porous rectangle must share exactly one full edge with the free-flow "
        f"rectangle or lie strictly inside it, got {drect} vs {srect}")


def _rects_conflict(a, b, strict):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    if strict:
        return not (ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0)
    return not (ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0)


def build_coupled_mesh(domain, nref=0):
    """Build the conforming two-subdomain mesh at refinement level nref."""
    n0 = domain.base_divisions
    if n0 < 1:
        raise ConfigurationError("base_divisions must be >= 1")
    if not domain.darcy_rects:
        raise ConfigurationError("no porous rectangle given, interface is empty")
    scale = 2 ** nref
    spacing = 1.0 / (n0 * scale)

    srect = _lattice_rect(domain.stokes_rect, n0, scale, "free-flow")
    drects = [_lattice_rect(r, n0, scale, "porous") for r in domain.darcy_rects]
    modes = [_classify_darcy(srect, r) for r in drects]
    for a in range(len(drects)):
        for b in range(a + 1, len(drects)):
            strict = modes[a] == "inclusion" or modes[b] == "inclusion"
            if _rects_conflict(drects[a], drects[b], strict):
                raise ConfigurationError(
                    f"porous rectangles {a} and {b} overlap or touch")

    squares = {}
    for comp, (i0, j0, i1, j1) in enumerate(drects):
        for j in range(j0, j1):
            for i in range(i0, i1):
                squares[(i, j)] = (DARCY, comp)
    I0, J0, I1, J1 = srect
    for j in range(J0, J1):
        for i in range(I0, I1):
            squares.setdefault((i, j), (STOKES, -1))

    vertex_ids = {}

    def vid(i, j):
        key = (j, i)
        if key not in vertex_ids:
            vertex_ids[key] = None
        return key

    order = sorted(squares)
    for (i, j) in order:
        for corner in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
            vid(*corner)
    for k, key in enumerate(sorted(vertex_ids)):
        vertex_ids[key] = k
    vertices = np.array([(i * spacing, j * spacing) for (j, i) in sorted(vertex_ids)])

    cells, subdom, comp_ids = [], [], []
    for (i, j) in sorted(squares, key=lambda s: (s[1], s[0])):
        sd, comp = squares[(i, j)]
        v00 = vertex_ids[(j, i)]
        v10 = vertex_ids[(j, i + 1)]
        v11 = vertex_ids[(j + 1, i + 1)]
        v01 = vertex_ids[(j + 1, i)]
        cells.append((v00, v10, v11))
        cells.append((v00, v11, v01))
        subdom.extend([sd, sd])
        comp_ids.extend([comp, comp])
    cells = np.array(cells)
    subdom = np.array(subdom)
    comp_ids = np.array(comp_ids)

    facet_map = {}
    for c, tri in enumerate(cells):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
            key = (min(a, b), max(a, b))
            facet_map.setdefault(key, []).append(c)
    facet_keys = sorted(facet_map)
    facets = np.array(facet_keys)
    facet_cells = np.full((len(facets), 2), -1, dtype=int)
    for f, key in enumerate(facet_keys):
        adj = sorted(facet_map[key])
        if len(adj) > 2:
            raise ConfigurationError("non-manifold facet")
        facet_cells[f, :len(adj)] = adj

    facet_tags = np.full(len(facets), TAG_NONE, dtype=object)
    facet_component = np.full(len(facets), -1, dtype=int)
    both = facet_cells[:, 1] >= 0
    sd0 = subdom[facet_cells[:, 0]]
    sd1 = np.where(both, subdom[facet_cells[:, 1]], sd0)
    iface = both & (sd0 != sd1)
    facet_tags[iface] = TAG_INTERFACE
    dcell = np.where(subdom[facet_cells[:, 0]] == DARCY,
                     facet_cells[:, 0], facet_cells[:, 1])
    facet_component[iface] = comp_ids[dcell[iface]]
    if not iface.any():
        raise ConfigurationError("interface is empty")

    mesh = Mesh(vertices=vertices, cells=cells, cell_subdomain=subdom,
                cell_component=comp_ids, facets=facets, facet_cells=facet_cells,
                facet_tags=facet_tags, facet_component=facet_component,
                spacing=spacing, domain=domain, nref=nref)
    mesh._modes = modes
    mesh._lattice = (srect, drects)
    return mesh


def _boundary_side(rect, fmid, spacing):
    """Which side of the lattice rectangle a boundary facet lies on."""
    i0, j0, i1, j1 = rect
    tol = 1e-9 * max(1.0, spacing)
    if abs(fmid[0] - i0 * spacing) < tol:
        return "left"
    if abs(fmid[0] - i1 * spacing) < tol:
        return "right"
    if abs(fmid[1] - j0 * spacing) < tol:
        return "bottom"
    if abs(fmid[1] - j1 * spacing) < tol:
        return "top"
    return None


_OPPOSITE = {"left": "right", "right": "left", "top": "bottom", "bottom": "top"}


def tag_boundaries(mesh, config):
    """Tag outer boundary facets according to the requested layout.

    Mutates and returns the mesh.  Interface facets keep their tag.
    """
    config = BcConfig(config)
    srect, drects = mesh._lattice
    modes = mesh._modes
    boundary = np.nonzero(mesh.facet_cells[:, 1] < 0)[0]

    if config is BcConfig.MULTI:
        if any(m != "inclusion" for m in modes):
            raise ConfigurationError(
                "MultiInclusion layout requires all porous rectangles to be inclusions")
        for f in boundary:
            cell = mesh.facet_cells[f, 0]
            if mesh.cell_subdomain[cell] == DARCY:
                raise ConfigurationError("inclusion touches the outer boundary")
            side = _boundary_side(srect, mesh.facet_midpoints([f])[0], mesh.spacing)
            tag = {"left": TAG_INFLOW, "right": TAG_OUTFLOW,
                   "top": TAG_WALL, "bottom": TAG_WALL}[side]
            mesh.facet_tags[f] = tag
    else:
        if len(drects) != 1 or modes[0] == "inclusion":
            raise ConfigurationError(
                f"layout {config.value} requires exactly one edge-sharing porous rectangle")
        shared = modes[0]                      # darcy side seen from stokes rect
        s_far = _OPPOSITE[shared]
        d_far = shared
        s_adj_tag, s_far_tag, d_adj_tag, d_far_tag = _EDGE_TAGS[config]
        for f in boundary:
            cell = mesh.facet_cells[f, 0]
            fmid = mesh.facet_midpoints([f])[0]
            if mesh.cell_subdomain[cell] == STOKES:
                side = _boundary_side(srect, fmid, mesh.spacing)
                mesh.facet_tags[f] = s_far_tag if side == s_far else s_adj_tag
            else:
                side = _boundary_side(drects[0], fmid, mesh.spacing)
                mesh.facet_tags[f] = d_far_tag if side == d_far else d_adj_tag

    has_essential = any(mesh.facet_tags[f] in STOKES_ESSENTIAL_TAGS for f in boundary)
    if not has_essential:
        raise ConfigurationError(
            "layout leaves the free-flow velocity unconstrained on the outer boundary")
    mesh.config = config
    mesh._chains = None
    return mesh


def _facet_normal_from_stokes(mesh, f):
    """Unit normal of facet f pointing from the Stokes cell into the Darcy cell."""
    c0, c1 = mesh.facet_cells[f]
    scell = c0 if mesh.cell_subdomain[c0] == STOKES else c1
    a, b = mesh.vertices[mesh.facets[f]]
    t = b - a
    n = np.array([t[1], -t[0]])
    n /= np.linalg.norm(n)
    centroid = mesh.vertices[mesh.cells[scell]].mean(axis=0)
    if np.dot(n, 0.5 * (a + b) - centroid) < 0:
        n = -n
    return n


def interface_chains(mesh):
    """Ordered interface components with Stokes-to-Darcy normals.

    Open chains (edge-sharing layouts) run in the direction of increasing
    midpoint coordinate; closed loops (inclusions) are traversed
    counterclockwise starting from the lexicographically smallest midpoint.
    Results are cached on the mesh.
    """
    if mesh._chains is not None:
        return mesh._chains
    iface = np.nonzero(mesh.facet_tags == TAG_INTERFACE)[0]
    chains = []
    for comp in sorted(set(mesh.facet_component[iface])):
        fids = iface[mesh.facet_component[iface] == comp]
        by_vertex = {}
        for f in fids:
            for v in mesh.facets[f]:
                by_vertex.setdefault(v, []).append(f)
        ends = sorted(v for v, fs in by_vertex.items() if len(fs) == 1)
        closed = not ends
        mids = mesh.facet_midpoints(fids)
        order_key = {f: (m[1], m[0]) for f, m in zip(fids, mids)}
        if closed:
            start = min(fids, key=lambda f: order_key[f])
            prev_v = min(mesh.facets[start])
        else:
            if len(ends) != 2:
                raise ConfigurationError("interface component is not a simple curve")
            start_v = min(
                ends, key=lambda v: (mesh.vertices[v][1], mesh.vertices[v][0]))
            start = by_vertex[start_v][0]
            prev_v = start_v
        chain = [start]
        cur = start
        while True:
            nxt_v = [v for v in mesh.facets[cur] if v != prev_v][0]
            cand = [f for f in by_vertex[nxt_v] if f != cur]
            if not cand:
                break
            cur = cand[0]
            prev_v = nxt_v
            if cur == start:
                break
            chain.append(cur)
        if len(chain) != len(fids):
            raise ConfigurationError("interface component is not a simple curve")
        chain = np.array(chain)
        normals = np.array([_facet_normal_from_stokes(mesh, f) for f in chain])
        if closed:
            # counterclockwise traversal around the inclusion: the
            # Stokes->Darcy normal then points to the left of the tangent
            mids_c = mesh.facet_midpoints(chain)
            area2 = 0.0
            for k in range(len(chain)):
                p, q = mids_c[k], mids_c[(k + 1) % len(chain)]
                area2 += p[0] * q[1] - q[0] * p[1]
            if area2 < 0:
                chain = chain[::-1].copy()
                normals = normals[::-1].copy()
        chains.append(InterfaceChain(facets=chain, normals=normals,
                                     closed=closed, component=int(comp)))
    mesh._chains = chains
    return chains


def interface_facets(mesh):
    """All interface facet ids in chain order, concatenated over components."""
    return np.concatenate([c.facets for c in interface_chains(mesh)])


def mesh_to_dict(mesh):
    d = {
        "spacing": mesh.spacing,
        "nref": mesh.nref,
        "config": mesh.config.value if mesh.config else None,
        "domain": {
            "stokes_rect": list(mesh.domain.stokes_rect),
            "darcy_rects": [list(r) for r in mesh.domain.darcy_rects],
            "base_divisions": mesh.domain.base_divisions,
        },
        "vertices": mesh.vertices.tolist(),
        "cells": mesh.cells.tolist(),
        "cell_subdomain": mesh.cell_subdomain.tolist(),
        "cell_component": mesh.cell_component.tolist(),
        "facets": mesh.facets.tolist(),
        "facet_cells": mesh.facet_cells.tolist(),
        "facet_tags": mesh.facet_tags.tolist(),
        "facet_component": mesh.facet_component.tolist(),
        "interface": [
            {
                "facets": c.facets.tolist(),
                "normals": c.normals.tolist(),
                "closed": c.closed,
                "component": c.component,
            }
            for c in interface_chains(mesh)
        ],
    }
    return d


def save_mesh(mesh, path):
    """Write the mesh as JSON (schema documented in the README)."""
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def load_mesh(path):
    with open(path) as fh:
        d = json.load(fh)
    dom = DomainSpec(tuple(d["domain"]["stokes_rect"]),
                     tuple(tuple(r) for r in d["domain"]["darcy_rects"]),
                     d["domain"]["base_divisions"])
    mesh = Mesh(vertices=np.array(d["vertices"]),
                cells=np.array(d["cells"]),
                cell_subdomain=np.array(d["cell_subdomain"]),
                cell_component=np.array(d["cell_component"]),
                facets=np.array(d["facets"]),
                facet_cells=np.array(d["facet_cells"]),
                facet_tags=np.array(d["facet_tags"], dtype=object),
                facet_component=np.array(d["facet_component"]),
                spacing=d["spacing"], domain=dom, nref=d["nref"],
                config=BcConfig(d["config"]) if d["config"] else None)
    mesh._chains = [
        InterfaceChain(facets=np.array(c["facets"]),
                       normals=np.array(c["normals"]),
                       closed=c["closed"], component=c["component"])
        for c in d["interface"]
    ]
    scale = 2 ** mesh.nref
    n0 = dom.base_divisions
    srect = _lattice_rect(dom.stokes_rect, n0, scale, "free-flow")
    drects = [_lattice_rect(r, n0, scale, "porous") for r in dom.darcy_rects]
    mesh._modes = [_classify_darcy(srect, r) for r in drects]
    mesh._lattice = (srect, drects)
    return mesh
