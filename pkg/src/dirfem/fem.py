"""P1 finite element core: assembly, interpolation, and norm evaluation.

Quadrature is fixed package-wide: the 3-point edge-midpoint rule on
triangles (exact through degree 2, so every P1 x P1 product and linear data
integrate exactly) and 2-point Gauss on boundary edges (exact through
degree 3). Assembled matrices are cached on the mesh, which is safe because
meshes are immutable.
"""

from __future__ import annotations

import math

import numpy as np

from .meshing import TriMesh
from .sparselin import SparseMatrix, assemble_from_triplets

__all__ = [
    "AnalyticFunction",
    "FieldFunction",
    "BoundaryFunction",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_boundary_mass",
    "load_vector",
    "boundary_load_vector",
    "nodal_interpolant",
    "h1_seminorm",
    "l2_norm",
    "boundary_l2_norm",
    "l2_error_vs_exact",
    "h1_error_vs_exact",
]

_GAUSS_T = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class AnalyticFunction:
    """Closed-form scalar field (x, y) -> value, with optional gradient."""

    def __init__(self, value, gradient=None, name: str | None = None):
        if not callable(value):
            raise TypeError("value must be callable")
        self._value = value
        self._gradient = gradient
        self.name = name

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = self._value(x, y)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()

    def gradient(self, x, y):
        if self._gradient is None:
            raise ValueError(f"function {self.name or ''!r} has no gradient")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx, gy = self._gradient(x, y)
        gx = np.broadcast_to(np.asarray(gx, dtype=float), x.shape).copy()
        gy = np.broadcast_to(np.asarray(gy, dtype=float), x.shape).copy()
        return gx, gy

    @staticmethod
    def constant(c: float, name: str | None = None) -> "AnalyticFunction":
        c = float(c)
        return AnalyticFunction(
            lambda x, y: np.full(np.shape(x), c),
            gradient=lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x))),
            name=name if name is not None else f"{c:g}",
        )

    def __repr__(self):
        return f"<AnalyticFunction {self.name or 'anonymous'}>"


def _call(func, x, y) -> np.ndarray:
    """Evaluate an AnalyticFunction or plain callable, broadcasting scalars."""
    out = func(x, y)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x)).copy()


class FieldFunction:
    """P1 function over the whole mesh, one coefficient per node."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: TriMesh, values):
        values = np.array(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError(
                f"expected {mesh.n_nodes} coefficients, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite coefficient in FieldFunction")
        values.flags.writeable = False
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("FieldFunction is immutable")

    def trace(self) -> "BoundaryFunction":
        return BoundaryFunction(self.mesh, self.values[self.mesh.boundary_nodes])

    def __add__(self, other):
        self._check(other)
        return FieldFunction(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return FieldFunction(self.mesh, self.values - other.values)

    def __mul__(self, scalar):
        return FieldFunction(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return FieldFunction(self.mesh, -self.values)

    def _check(self, other):
        if not isinstance(other, FieldFunction) or other.mesh is not self.mesh:
            raise ValueError("operands must live on the same mesh")

    def __repr__(self):
        return f"<FieldFunction on {self.mesh.n_nodes} nodes>"


class BoundaryFunction:
    """Function on the trace space: one coefficient per boundary node.

    Coefficients follow the counterclockwise boundary chain starting at
    polygon vertex 0 (the ordering of `mesh.boundary_nodes`).
    """

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: TriMesh, values):
        values = np.array(values, dtype=float)
        if values.shape != (mesh.n_boundary,):
            raise ValueError(
                f"expected {mesh.n_boundary} coefficients, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite coefficient in BoundaryFunction")
        values.flags.writeable = False
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("BoundaryFunction is immutable")

    def __add__(self, other):
        self._check(other)
        return BoundaryFunction(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return BoundaryFunction(self.mesh, self.values - other.values)

    def __mul__(self, scalar):
        return BoundaryFunction(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return BoundaryFunction(self.mesh, -self.values)

    def _check(self, other):
        if not isinstance(other, BoundaryFunction) or other.mesh is not self.mesh:
            raise ValueError("operands must live on the same mesh")

    def __repr__(self):
        return f"<BoundaryFunction on {self.mesh.n_boundary} boundary nodes>"


# ---------------------------------------------------------------------------
# element geometry (cached per mesh)
# ---------------------------------------------------------------------------

def _tri_geometry(mesh: TriMesh):
    """Per-element shape data: coefficient arrays b, c with
    grad(phi_k) = (b_k, c_k) / (2 area), plus areas."""
    if "tri_geom" not in mesh._cache:
        p = mesh.node_coords[mesh.triangles]  # (m, 3, 2)
        x = p[..., 0]
        y = p[..., 1]
        nxt = [1, 2, 0]
        prv = [2, 0, 1]
        b = y[:, nxt] - y[:, prv]
        c = x[:, prv] - x[:, nxt]
        area = mesh.triangle_areas()
        mesh._cache["tri_geom"] = (b, c, area)
    return mesh._cache["tri_geom"]


def _edge_midpoints(mesh: TriMesh) -> np.ndarray:
    """Midpoint opposite each vertex, shape (m, 3, 2); built on demand
    rather than cached (it is the largest of the per-element arrays)."""
    p = mesh.node_coords[mesh.triangles]
    nxt = [1, 2, 0]
    prv = [2, 0, 1]
    return 0.5 * (p[:, nxt, :] + p[:, prv, :])


def _scatter_rows_cols(tris):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return rows, cols


def assemble_stiffness(mesh: TriMesh) -> SparseMatrix:
    """A_ij = integral of grad(phi_i) . grad(phi_j); exact, symmetric,
    zero row sums. Cached on the mesh."""
    if "A" not in mesh._cache:
        b, c, area = _tri_geometry(mesh)
        scale = 1.0 / (4.0 * area)
        local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
        local *= scale[:, None, None]
        rows, cols = _scatter_rows_cols(mesh.triangles)
        n = mesh.n_nodes
        mesh._cache["A"] = assemble_from_triplets(
            n, n, (rows, cols, local.ravel())
        )
    return mesh._cache["A"]


def assemble_mass(mesh: TriMesh) -> SparseMatrix:
    """M_ij = integral of phi_i phi_j; local matrix area/12 * [[2,1,1],...]."""
    if "M" not in mesh._cache:
        _, _, area = _tri_geometry(mesh)
        base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
        local = (area / 12.0)[:, None, None] * base
        rows, cols = _scatter_rows_cols(mesh.triangles)
        n = mesh.n_nodes
        mesh._cache["M"] = assemble_from_triplets(
            n, n, (rows, cols, local.ravel())
        )
    return mesh._cache["M"]


def assemble_boundary_mass(mesh: TriMesh) -> SparseMatrix:
    """Boundary mass matrix in chain ordering (size n_boundary^2).

    Each edge of length L contributes L/6 * [[2,1],[1,2]] to its two chain
    positions; the result is cyclically tridiagonal.
    """
    if "Mb" not in mesh._cache:
        nb = mesh.n_boundary
        pts = mesh.node_coords[mesh.boundary_nodes]
        nxt = np.roll(np.arange(nb), -1)
        ell = np.linalg.norm(pts[nxt] - pts, axis=1)
        i = np.arange(nb)
        rows = np.concatenate([i, nxt, i, nxt])
        cols = np.concatenate([i, nxt, nxt, i])
        vals = np.concatenate([ell / 3.0, ell / 3.0, ell / 6.0, ell / 6.0])
        mesh._cache["Mb"] = assemble_from_triplets(nb, nb, (rows, cols, vals))
    return mesh._cache["Mb"]


# ---------------------------------------------------------------------------
# load vectors and interpolation
# ---------------------------------------------------------------------------

def load_vector(mesh: TriMesh, f) -> np.ndarray:
    """b_i ~ integral of f phi_i by the edge-midpoint rule.

    phi_k is 1/2 on the two midpoints adjacent to vertex k and 0 on the
    opposite one, so node k of each element receives
    area/6 * (f(mid_{k+1}) + f(mid_{k+2})).
    """
    _, _, area = _tri_geometry(mesh)
    mid = _edge_midpoints(mesh)
    fm = _call(f, mid[..., 0], mid[..., 1])  # (m, 3), midpoint opposite k
    del mid
    n = mesh.n_nodes
    out = np.zeros(n)
    w = area / 6.0
    for k in range(3):
        contrib = w * (fm[:, (k + 1) % 3] + fm[:, (k + 2) % 3])
        out += np.bincount(mesh.triangles[:, k], weights=contrib, minlength=n)
    return out


def boundary_load_vector(mesh: TriMesh, g) -> np.ndarray:
    """b_i ~ integral over the boundary of g phi_i; 2-point Gauss per edge
    (exact through degree 3). Indexed by boundary chain position."""
    nb = mesh.n_boundary
    pts = mesh.node_coords[mesh.boundary_nodes]
    nxt = np.roll(np.arange(nb), -1)
    seg = pts[nxt] - pts
    ell = np.linalg.norm(seg, axis=1)
    out = np.zeros(nb)
    for t in _GAUSS_T:
        xy = pts + t * seg
        gv = _call(g, xy[:, 0], xy[:, 1])
        out += np.bincount(
            np.arange(nb), weights=0.5 * ell * gv * (1.0 - t), minlength=nb
        )
        out += np.bincount(nxt, weights=0.5 * ell * gv * t, minlength=nb)
    return out


def nodal_interpolant(mesh: TriMesh, v) -> FieldFunction:
    """I_h v: coefficients are the point values of v at the mesh nodes."""
    xy = mesh.node_coords
    return FieldFunction(mesh, _call(v, xy[:, 0], xy[:, 1]))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def h1_seminorm(u: FieldFunction) -> float:
    A = assemble_stiffness(u.mesh)
    return math.sqrt(max(float(u.values @ (A @ u.values)), 0.0))


def l2_norm(u: FieldFunction) -> float:
    M = assemble_mass(u.mesh)
    return math.sqrt(max(float(u.values @ (M @ u.values)), 0.0))


def boundary_l2_norm(z: BoundaryFunction) -> float:
    Mb = assemble_boundary_mass(z.mesh)
    return math.sqrt(max(float(z.values @ (Mb @ z.values)), 0.0))


def l2_error_vs_exact(u_h: FieldFunction, exact) -> float:
    """||u_h - exact||_L2 by the edge-midpoint rule."""
    mesh = u_h.mesh
    _, _, area = _tri_geometry(mesh)
    mid = _edge_midpoints(mesh)
    v = u_h.values[mesh.triangles]  # (m, 3)
    uh_mid = np.empty_like(v)
    for k in range(3):
        uh_mid[:, k] = 0.5 * (v[:, (k + 1) % 3] + v[:, (k + 2) % 3])
    diff = uh_mid - _call(exact, mid[..., 0], mid[..., 1])
    return math.sqrt(float(((diff**2).sum(axis=1) * area / 3.0).sum()))


def h1_error_vs_exact(u_h: FieldFunction, exact: AnalyticFunction) -> float:
    """|u_h - exact|_H1 by the edge-midpoint rule (needs exact.gradient)."""
    mesh = u_h.mesh
    b, c, area = _tri_geometry(mesh)
    mid = _edge_midpoints(mesh)
    v = u_h.values[mesh.triangles]
    gx_h = (v * b).sum(axis=1) / (2.0 * area)
    gy_h = (v * c).sum(axis=1) / (2.0 * area)
    gx, gy = exact.gradient(mid[..., 0], mid[..., 1])  # (m, 3)
    dx = gx_h[:, None] - gx
    dy = gy_h[:, None] - gy
    return math.sqrt(float((((dx**2 + dy**2).sum(axis=1)) * area / 3.0).sum()))
