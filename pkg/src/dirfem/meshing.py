"""Conforming P1 triangulations with longest-edge bisection refinement.

Meshes are immutable. `bisect_refine` returns a new mesh that keeps a
reference to its parent together with, for every node it created, the edge
(two parent-node indices) whose midpoint it is; this lineage makes the nested
P1 prolongation exact and lets convergence studies compare any level against
a finer reference level.

Boundary edges are stored as a closed counterclockwise chain starting at the
node that coincides with polygon vertex 0; the chain order fixes the
coefficient layout of boundary functions and the bandwidth of the boundary
mass matrix. Each boundary edge carries the index of the polygon side it
lies on (children inherit the tag of the edge they subdivide).
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .geometry import CORNER_TOL, PolygonalDomain

__all__ = [
    "TriMesh",
    "initial_mesh",
    "triangulate_custom",
    "bisect_refine",
    "mesh_size",
    "prolongate",
    "min_triangle_angle",
    "save_mesh",
    "load_mesh",
]

_INT = np.int64


class TriMesh:
    """Conforming triangulation of a polygonal domain.

    Parameters are validated on construction: positive triangle areas,
    conformity (edges shared by at most two triangles, and the edges owned
    by exactly one triangle are precisely the boundary edges), and a single
    closed boundary chain.
    """

    def __init__(
        self,
        node_coords,
        triangles,
        boundary_edges,
        boundary_edge_tags,
        domain: PolygonalDomain | None = None,
        parent: "TriMesh | None" = None,
        parent_edge_endpoints=None,
        validate: bool = True,
    ):
        coords = np.ascontiguousarray(node_coords, dtype=float)
        tris = np.ascontiguousarray(triangles, dtype=_INT)
        bedges = np.ascontiguousarray(boundary_edges, dtype=_INT)
        btags = np.ascontiguousarray(boundary_edge_tags, dtype=_INT)

        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("node_coords must be (n, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] == 0:
            raise ValueError("triangles must be (m >= 1, 3)")
        if bedges.ndim != 2 or bedges.shape[1] != 2:
            raise ValueError("boundary_edges must be (k, 2)")
        if btags.shape != (bedges.shape[0],):
            raise ValueError("one tag per boundary edge required")

        n = coords.shape[0]
        if tris.min() < 0 or tris.max() >= n:
            raise ValueError("triangle node index out of range")

        p = coords[tris]
        area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 1, 1] - p[:, 0, 1]
        ) * (p[:, 2, 0] - p[:, 0, 0])
        if np.any(area2 <= 0.0):
            bad = int(np.argmin(area2))
            raise ValueError(
                f"triangle {bad} is degenerate or negatively oriented "
                f"(signed area {0.5 * area2[bad]:.3e})"
            )

        if validate:
            self._check_conforming(n, tris, bedges)
        self._check_boundary_chain(bedges)

        flags = np.zeros(n, dtype=bool)
        flags[bedges.ravel()] = True

        self._coords = coords
        self._tris = tris
        self._bedges = bedges
        self._btags = btags
        self._bflags = flags
        for a in (
            self._coords,
            self._tris,
            self._bedges,
            self._btags,
            self._bflags,
        ):
            a.flags.writeable = False

        self.domain = domain
        self.parent = parent
        if parent_edge_endpoints is None:
            self._parent_edges = None
        else:
            pe = np.ascontiguousarray(parent_edge_endpoints, dtype=_INT)
            if parent is None or pe.shape != (n - parent.n_nodes, 2):
                raise ValueError("parent_edge_endpoints inconsistent with parent")
            self._parent_edges = pe
            self._parent_edges.flags.writeable = False

        d0 = p[:, 2] - p[:, 1]
        d1 = p[:, 0] - p[:, 2]
        d2 = p[:, 1] - p[:, 0]
        sq = np.concatenate(
            [(d0 * d0).sum(1), (d1 * d1).sum(1), (d2 * d2).sum(1)]
        )
        self._h = float(np.sqrt(sq.max()))
        self._area2 = area2
        self._area2.flags.writeable = False
        self._cache: dict = {}

    @staticmethod
    def _check_conforming(n, tris, bedges):
        va = tris[:, [1, 2, 0]].ravel()
        vb = tris[:, [2, 0, 1]].ravel()
        keys = np.minimum(va, vb) * n + np.maximum(va, vb)
        uniq, counts = np.unique(keys, return_counts=True)
        if counts.max(initial=0) > 2:
            raise ValueError("non-conforming mesh: an edge is shared by > 2 triangles")
        single = uniq[counts == 1]
        bkeys = np.sort(np.minimum(bedges[:, 0], bedges[:, 1]) * n
                        + np.maximum(bedges[:, 0], bedges[:, 1]))
        if single.size != bkeys.size or not np.array_equal(np.sort(single), bkeys):
            raise ValueError(
                "boundary edges do not match the topological boundary "
                "(hanging node or wrong boundary list)"
            )

    @staticmethod
    def _check_boundary_chain(bedges):
        if bedges.shape[0] < 3:
            raise ValueError("boundary chain must have at least 3 edges")
        nxt = np.roll(bedges[:, 0], -1)
        if not np.array_equal(bedges[:, 1], nxt):
            raise ValueError("boundary edges must form a single closed chain")
        starts = bedges[:, 0]
        if np.unique(starts).size != starts.size:
            raise ValueError("boundary chain visits a node twice")

    # -- basic fields ------------------------------------------------------

    @property
    def node_coords(self) -> np.ndarray:
        return self._coords

    @property
    def triangles(self) -> np.ndarray:
        return self._tris

    @property
    def boundary_edges(self) -> np.ndarray:
        """Boundary edges (node index pairs) in counterclockwise chain order."""
        return self._bedges

    @property
    def boundary_edge_tags(self) -> np.ndarray:
        return self._btags

    @property
    def boundary_node_flags(self) -> np.ndarray:
        return self._bflags

    @property
    def n_nodes(self) -> int:
        return self._coords.shape[0]

    @property
    def n_triangles(self) -> int:
        return self._tris.shape[0]

    @property
    def h(self) -> float:
        """Maximal element diameter (longest edge length)."""
        return self._h

    # -- derived node orderings -------------------------------------------

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary node indices in chain order (defines the trace layout)."""
        return self._bedges[:, 0]

    @property
    def n_boundary(self) -> int:
        return self._bedges.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        key = "interior_nodes"
        if key not in self._cache:
            idx = np.flatnonzero(~self._bflags)
            idx.flags.writeable = False
            self._cache[key] = idx
        return self._cache[key]

    @property
    def n_interior(self) -> int:
        return self.n_nodes - self.n_boundary

    @property
    def boundary_index(self) -> np.ndarray:
        """Per-node position in the boundary chain (-1 for interior nodes)."""
        key = "boundary_index"
        if key not in self._cache:
            pos = np.full(self.n_nodes, -1, dtype=_INT)
            pos[self.boundary_nodes] = np.arange(self.n_boundary, dtype=_INT)
            pos.flags.writeable = False
            self._cache[key] = pos
        return self._cache[key]

    @property
    def parent_map(self) -> dict:
        """node index -> (a, b): the parent-mesh edge this node bisected."""
        key = "parent_map"
        if key not in self._cache:
            if self._parent_edges is None:
                self._cache[key] = {}
            else:
                base = self.parent.n_nodes
                self._cache[key] = {
                    base + i: (int(a), int(b))
                    for i, (a, b) in enumerate(self._parent_edges)
                }
        return self._cache[key]

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * self._area2

    def corner_node_indices(self) -> np.ndarray:
        """Mesh nodes coinciding with polygon vertices (within 1e-12)."""
        if self.domain is None:
            raise ValueError("mesh has no associated domain")
        verts = self.domain.vertices
        bnodes = self.boundary_nodes
        pts = self._coords[bnodes]
        out = np.full(verts.shape[0], -1, dtype=_INT)
        for j, v in enumerate(verts):
            d = np.abs(pts - v).max(axis=1)
            hit = np.flatnonzero(d <= CORNER_TOL)
            if hit.size:
                out[j] = bnodes[hit[0]]
        return out

    def __repr__(self):
        return (
            f"<TriMesh: {self.n_nodes} nodes ({self.n_boundary} boundary), "
            f"{self.n_triangles} triangles, h={self._h:.4g}>"
        )


# ---------------------------------------------------------------------------
# initial meshes
# ---------------------------------------------------------------------------

def _chain_edges(node_chain: Iterable[int], tags: Iterable[int]):
    chain = list(node_chain)
    edges = [(chain[i], chain[(i + 1) % len(chain)]) for i in range(len(chain))]
    return np.array(edges, dtype=_INT), np.array(list(tags), dtype=_INT)


def initial_mesh(domain: PolygonalDomain) -> TriMesh:
    """Structured starting mesh of a builtin domain (2, 3 or 6 triangles).

    All elements are right isosceles with legs of length 1 and hypotenuse
    sqrt(2), so uniform longest-edge bisection stays self-similar.
    """
    name = getattr(domain, "name", None)
    if name == "omega90":
        nodes = domain.vertices
        tris = [(0, 1, 2), (0, 2, 3)]
        bedges, btags = _chain_edges([0, 1, 2, 3], [0, 1, 2, 3])
    elif name == "omega135":
        # the quadrilateral hull (0,0),(1,0),(1,1),(-1,1) split into three
        # right isosceles triangles through the auxiliary boundary node (0,1);
        # the collinear polygon vertex (-sqrt2/2, sqrt2/2) is not a mesh node
        nodes = np.array(
            [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (-1.0, 1.0)]
        )
        tris = [(0, 1, 2), (0, 2, 3), (0, 3, 4)]
        # the edge (-1,1) -> (0,0) spans the two collinear sides Gamma_3 and
        # Gamma_4; its midpoint (-1/2, 1/2) has radius < 1, hence tag 4
        bedges, btags = _chain_edges([0, 1, 2, 3, 4], [0, 1, 2, 2, 4])
    elif name == "omega270":
        # fan around the reentrant corner over the eight boundary nodes
        nodes = np.array(
            [
                (0.0, 0.0),
                (1.0, 0.0),
                (1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, -1.0),
                (0.0, -1.0),
                (0.0, 1.0),
                (-1.0, 0.0),
            ]
        )
        tris = [(0, 1, 2), (0, 2, 6), (0, 6, 3), (0, 3, 7), (0, 7, 4), (0, 4, 5)]
        bedges, btags = _chain_edges(
            [0, 1, 2, 6, 3, 7, 4, 5], [0, 1, 2, 2, 3, 3, 4, 5]
        )
    else:
        raise ValueError(
            "initial_mesh needs a builtin domain (omega90/omega135/omega270); "
            "use triangulate_custom for other polygons"
        )
    return TriMesh(nodes, tris, bedges, btags, domain=domain)


def triangulate_custom(domain: PolygonalDomain) -> TriMesh:
    """Conforming triangulation of an arbitrary simple polygon (ear clipping).

    Nodes are exactly the polygon vertices; every polygon side becomes one
    boundary edge. Collinear (angle pi) vertices are supported.
    """
    verts = domain.vertices
    k = verts.shape[0]
    scale2 = float(np.max(np.ptp(verts, axis=0))) ** 2
    eps = 1e-14 * scale2

    ring = list(range(k))
    tris: list[tuple[int, int, int]] = []

    def cross(i, j, l):
        a, b, c = verts[i], verts[j], verts[l]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def point_blocked(i, j, l, others):
        # any remaining ring vertex inside or on the candidate ear (i, j, l)
        for q in others:
            s1 = cross(i, j, q)
            s2 = cross(j, l, q)
            s3 = cross(l, i, q)
            if s1 >= -eps and s2 >= -eps and s3 >= -eps:
                return True
        return False

    while len(ring) > 3:
        clipped = False
        for pos in range(len(ring)):
            i = ring[pos - 1]
            j = ring[pos]
            l = ring[(pos + 1) % len(ring)]
            if cross(i, j, l) <= eps:
                continue  # reflex or collinear corner, not an ear
            others = [q for q in ring if q not in (i, j, l)]
            if point_blocked(i, j, l, others):
                continue
            tris.append((i, j, l))
            del ring[pos]
            clipped = True
            break
        if not clipped:
            raise ValueError("ear clipping failed; polygon may be degenerate")
    if cross(*ring) <= eps:
        raise ValueError("ear clipping left a degenerate final triangle")
    tris.append(tuple(ring))

    bedges, btags = _chain_edges(range(k), range(k))
    return TriMesh(verts, np.array(tris, dtype=_INT), bedges, btags, domain=domain)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def bisect_refine(mesh: TriMesh) -> TriMesh:
    """One uniform longest-edge bisection pass.

    Every triangle is bisected through the midpoint of its longest edge
    (ties broken by the smallest opposite global vertex index); conformity is
    restored by recursively marking the longest edge of any triangle that
    acquired a marked edge. On the structured builtin meshes the closure set
    is empty and the element count exactly doubles. The resulting P1 space
    contains the input space exactly.
    """
    nodes = mesh.node_coords
    tris = mesh.triangles
    n = mesh.n_nodes
    m = mesh.n_triangles
    rows = np.arange(m)

    # edge opposite local vertex k has endpoints (k+1, k+2) mod 3
    va = tris[:, [1, 2, 0]]
    vb = tris[:, [2, 0, 1]]
    dxy = nodes[va] - nodes[vb]
    sq = (dxy * dxy).sum(axis=2)  # (m, 3) squared edge lengths
    ekey = np.minimum(va, vb) * n + np.maximum(va, vb)

    is_max = sq == sq.max(axis=1, keepdims=True)
    opp = np.where(is_max, tris, np.iinfo(_INT).max)
    le = np.argmin(opp, axis=1)
    lekey = ekey[rows, le]

    marked = np.unique(lekey)
    while True:
        has_any = np.isin(ekey, marked).any(axis=1)
        need = has_any & ~np.isin(lekey, marked)
        if not need.any():
            break
        marked = np.union1d(marked, lekey[need])

    new_xy = 0.5 * (nodes[marked // n] + nodes[marked % n])
    all_coords = np.vstack([nodes, new_xy])

    def midpoint_id(keys):
        return n + np.searchsorted(marked, keys)

    mk = np.isin(ekey, marked)
    A = tris[rows, le]
    B = va[rows, le]
    C = vb[rows, le]
    mBC = mk[rows, le]
    mCA = mk[rows, (le + 1) % 3]
    mAB = mk[rows, (le + 2) % 3]
    if np.any((mCA | mAB) & ~mBC):
        raise RuntimeError("bisection closure failed to mark a longest edge")

    Mbc = np.where(mBC, midpoint_id(lekey), -1)
    Mca = np.where(mCA, midpoint_id(ekey[rows, (le + 1) % 3]), -1)
    Mab = np.where(mAB, midpoint_id(ekey[rows, (le + 2) % 3]), -1)

    n_child = 1 + mBC.astype(int) + mCA.astype(int) + mAB.astype(int)
    off = np.zeros(m + 1, dtype=_INT)
    np.cumsum(n_child, out=off[1:])
    out = np.empty((int(off[-1]), 3), dtype=_INT)

    def put(mask, slot, v0, v1, v2):
        idx = off[:-1][mask] + slot
        out[idx, 0] = v0[mask] if isinstance(v0, np.ndarray) else v0
        out[idx, 1] = v1[mask] if isinstance(v1, np.ndarray) else v1
        out[idx, 2] = v2[mask] if isinstance(v2, np.ndarray) else v2

    keep = ~mBC
    put(keep, 0, A, B, C)

    c1 = mBC & ~mCA & ~mAB
    put(c1, 0, A, B, Mbc)
    put(c1, 1, A, Mbc, C)

    c2 = mBC & mAB & ~mCA
    put(c2, 0, Mbc, A, Mab)
    put(c2, 1, Mbc, Mab, B)
    put(c2, 2, A, Mbc, C)

    c3 = mBC & mCA & ~mAB
    put(c3, 0, A, B, Mbc)
    put(c3, 1, Mbc, C, Mca)
    put(c3, 2, Mbc, Mca, A)

    c4 = mBC & mCA & mAB
    put(c4, 0, Mbc, A, Mab)
    put(c4, 1, Mbc, Mab, B)
    put(c4, 2, Mbc, C, Mca)
    put(c4, 3, Mbc, Mca, A)

    # split boundary edges in place to keep the chain order
    bedges = mesh.boundary_edges
    btags = mesh.boundary_edge_tags
    bkey = np.minimum(bedges[:, 0], bedges[:, 1]) * n + np.maximum(
        bedges[:, 0], bedges[:, 1]
    )
    bsplit = np.isin(bkey, marked)
    boff = np.zeros(bedges.shape[0] + 1, dtype=_INT)
    np.cumsum(1 + bsplit.astype(int), out=boff[1:])
    new_bedges = np.empty((int(boff[-1]), 2), dtype=_INT)
    new_btags = np.empty(int(boff[-1]), dtype=_INT)
    mid_b = np.where(bsplit, midpoint_id(bkey), -1)
    iu = boff[:-1]
    new_bedges[iu, 0] = bedges[:, 0]
    new_bedges[iu[~bsplit], 1] = bedges[~bsplit, 1]
    new_btags[iu] = btags
    new_bedges[iu[bsplit], 1] = mid_b[bsplit]
    new_bedges[iu[bsplit] + 1, 0] = mid_b[bsplit]
    new_bedges[iu[bsplit] + 1, 1] = bedges[bsplit, 1]
    new_btags[iu[bsplit] + 1] = btags[bsplit]

    return TriMesh(
        all_coords,
        out,
        new_bedges,
        new_btags,
        domain=mesh.domain,
        parent=mesh,
        parent_edge_endpoints=np.column_stack([marked // n, marked % n]),
    )


def mesh_size(mesh: TriMesh) -> float:
    """h = maximal element diameter = longest edge length."""
    return mesh.h


def min_triangle_angle(mesh: TriMesh) -> float:
    """Smallest interior angle over all triangles, in radians."""
    p = mesh.node_coords[mesh.triangles]
    angles = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        c = (u * v).sum(1) / np.sqrt((u * u).sum(1) * (v * v).sum(1))
        angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
    return float(np.min(angles))


# ---------------------------------------------------------------------------
# nested prolongation
# ---------------------------------------------------------------------------

def _lineage(coarse: TriMesh, fine: TriMesh) -> list[TriMesh]:
    chain = [fine]
    cur = fine
    while cur is not coarse:
        if cur.parent is None:
            raise ValueError("meshes are not nested (no refinement lineage)")
        cur = cur.parent
        chain.append(cur)
    chain.reverse()
    return chain


def prolongate(coarse_values, coarse: TriMesh, fine: TriMesh):
    """Exact P1 embedding of coarse nodal values into a nested finer mesh.

    New node values are the averages of their parent-edge endpoint values,
    applied level by level along the refinement lineage. Accepts a raw
    coefficient array or any wrapper exposing `.values`; the return matches
    the input kind.
    """
    wrapper = None
    values = coarse_values
    if hasattr(coarse_values, "values"):
        wrapper = type(coarse_values)
        values = coarse_values.values
    values = np.asarray(values, dtype=float)
    if values.shape != (coarse.n_nodes,):
        raise ValueError("coarse_values length does not match the coarse mesh")

    for level in _lineage(coarse, fine)[1:]:
        ext = np.empty(level.n_nodes, dtype=float)
        ext[: values.size] = values
        pe = level._parent_edges
        ext[values.size:] = 0.5 * (ext[pe[:, 0]] + ext[pe[:, 1]])
        values = ext

    if wrapper is not None:
        return wrapper(fine, values)
    return values


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_FMT_HEADER = "trimesh 1"


def save_mesh(mesh: TriMesh, path) -> None:
    """Write the mesh in the line-oriented text format.

    Layout: header; `nodes N` then N coordinate lines (17 significant
    digits, exact float64 round-trip); `triangles M` then M index triples;
    `boundary_edges K` then K lines `start end tag` in chain order.
    Refinement lineage is not serialized.
    """
    lines = [_FMT_HEADER, f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.node_coords]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"boundary_edges {mesh.n_boundary}")
    lines += [
        f"{u} {v} {t}"
        for (u, v), t in zip(mesh.boundary_edges, mesh.boundary_edge_tags)
    ]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    """Read a mesh written by `save_mesh` (domain and lineage are not kept)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]

    def fail(lineno, msg):
        raise ValueError(f"{path}: line {lineno + 1}: {msg}")

    if not lines or lines[0] != _FMT_HEADER:
        fail(0, f"expected header {_FMT_HEADER!r}")

    pos = 1

    def section(keyword):
        nonlocal pos
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != keyword or not parts[1].isdigit():
            fail(pos, f"expected '{keyword} <count>'")
        pos += 1
        return int(parts[1])

    n = section("nodes")
    coords = np.empty((n, 2))
    for i in range(n):
        parts = lines[pos].split()
        if len(parts) != 2:
            fail(pos, "expected 'x y'")
        coords[i] = [float(parts[0]), float(parts[1])]
        pos += 1

    m = section("triangles")
    tris = np.empty((m, 3), dtype=_INT)
    for i in range(m):
        parts = lines[pos].split()
        if len(parts) != 3:
            fail(pos, "expected three node indices")
        tris[i] = [int(q) for q in parts]
        pos += 1

    k = section("boundary_edges")
    bedges = np.empty((k, 2), dtype=_INT)
    btags = np.empty(k, dtype=_INT)
    for i in range(k):
        parts = lines[pos].split()
        if len(parts) != 3:
            fail(pos, "expected 'start end tag'")
        bedges[i] = [int(parts[0]), int(parts[1])]
        btags[i] = int(parts[2])
        pos += 1

    if pos != len(lines):
        fail(pos, "unexpected trailing content")
    return TriMesh(coords, tris, bedges, btags)
