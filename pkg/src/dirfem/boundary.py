"""Trace-space operators built on the variational normal derivative.

The normal derivative of a discrete solution is defined weakly through
Green's identity: test the interior residual with the boundary hat
functions and solve a boundary mass system. Composing it with the discrete
harmonic extension gives the Steklov-Poincare map N_h, whose quadratic form
is the H^{1/2}(Gamma) seminorm used to regularize the control problem; the
dual construction (Riesz solve with N_h + M_boundary) realizes a discrete
H^{-1/2}(Gamma) norm.

All operators reuse a single LU factorization of the interior stiffness
block per mesh, cached on the mesh object.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .fem import (
    BoundaryFunction,
    FieldFunction,
    assemble_boundary_mass,
    assemble_stiffness,
    boundary_load_vector,
    h1_seminorm,
    load_vector,
    nodal_interpolant,
)
from .meshing import TriMesh
from .sparselin import factorize, spd_solve

__all__ = [
    "l2_projection_Qh",
    "variational_normal_derivative",
    "harmonic_extension_Sh",
    "zero_extension_Eh",
    "modified_interpolant",
    "steklov_poincare_Nh",
    "h_half_seminorm",
    "h_minus_half_norm",
]


# ---------------------------------------------------------------------------
# cached interior solves
# ---------------------------------------------------------------------------

def interior_solver(mesh: TriMesh):
    """Reusable direct solve with the interior stiffness block A_II."""
    if "A_II_solve" not in mesh._cache:
        I = mesh.interior_nodes
        if I.size == 0:
            mesh._cache["A_II_solve"] = lambda b: np.zeros(0)
        else:
            A = assemble_stiffness(mesh)
            mesh._cache["A_II_solve"] = factorize(A.submatrix(I, I))
    return mesh._cache["A_II_solve"]


def interior_boundary_block(mesh: TriMesh):
    """A_IB: interior rows, boundary columns in chain order."""
    if "A_IB" not in mesh._cache:
        A = assemble_stiffness(mesh)
        mesh._cache["A_IB"] = A.submatrix(mesh.interior_nodes, mesh.boundary_nodes)
    return mesh._cache["A_IB"]


def boundary_mass_solve(mesh: TriMesh, rhs: np.ndarray, rel_tol: float = 1e-13) -> np.ndarray:
    """Solve M_boundary x = rhs (Jacobi-CG; the matrix is cyclic tridiagonal
    and uniformly well conditioned)."""
    return spd_solve(assemble_boundary_mass(mesh), rhs, rel_tol=rel_tol)


def _riesz_solver(mesh: TriMesh):
    """Factorized Riesz map of the discrete H^{1/2} inner product
    <(N_h + M_b) w, v>, realized sparsely as the full stiffness matrix with
    the boundary mass added to its boundary block: rows/cols ordered
    [interior nodes, boundary chain]."""
    if "riesz_solve" not in mesh._cache:
        A = assemble_stiffness(mesh).csr
        Mb = assemble_boundary_mass(mesh).csr
        I = mesh.interior_nodes
        Bn = mesh.boundary_nodes
        if I.size == 0:
            K = (A[Bn][:, Bn] + Mb).tocsc()
        else:
            K = sp.bmat(
                [
                    [A[I][:, I], A[I][:, Bn]],
                    [A[Bn][:, I], A[Bn][:, Bn] + Mb],
                ],
                format="csc",
            )
        mesh._cache["riesz_solve"] = factorize(K)
    return mesh._cache["riesz_solve"]


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def l2_projection_Qh(mesh: TriMesh, g) -> BoundaryFunction:
    """L2(Gamma)-orthogonal projection of g onto the trace space."""
    rhs = boundary_load_vector(mesh, g)
    return BoundaryFunction(mesh, boundary_mass_solve(mesh, rhs))


def variational_normal_derivative(
    mesh: TriMesh, y_h: FieldFunction, f=None
) -> BoundaryFunction:
    """Discrete normal derivative of y_h given its volume load f.

    Defined by (d, phi_i)_Gamma = (grad y_h, grad phi_i)_Omega - (f, phi_i)
    for every boundary basis function phi_i; realized as a boundary mass
    solve against the boundary rows of the stiffness residual. Pass f=None
    for a vanishing load.
    """
    A = assemble_stiffness(mesh)
    r = A @ y_h.values
    if f is not None:
        r = r - load_vector(mesh, f)
    return BoundaryFunction(mesh, boundary_mass_solve(mesh, r[mesh.boundary_nodes]))


def harmonic_extension_Sh(mesh: TriMesh, z_h: BoundaryFunction) -> FieldFunction:
    """Discretely harmonic P1 field with trace exactly z_h
    (interior coefficients solve A_II u_I = -A_IB z)."""
    u = np.zeros(mesh.n_nodes)
    u[mesh.boundary_nodes] = z_h.values
    I = mesh.interior_nodes
    if I.size:
        rhs = -(interior_boundary_block(mesh) @ z_h.values)
        u[I] = interior_solver(mesh)(rhs)
    return FieldFunction(mesh, u)


def zero_extension_Eh(mesh: TriMesh, z_h: BoundaryFunction) -> FieldFunction:
    """Extension by zero: boundary coefficients z_h, interior zero."""
    u = np.zeros(mesh.n_nodes)
    u[mesh.boundary_nodes] = z_h.values
    return FieldFunction(mesh, u)


def modified_interpolant(mesh: TriMesh, y, g=None) -> FieldFunction:
    """Nodal interpolant with its trace replaced by the L2 projection of g.

    Computes I_h y + E_h(Q_h g - I_h g); if g is omitted it defaults to the
    trace of y. The trace of the result equals Q_h g by construction.
    """
    if g is None:
        g = y
    vals = nodal_interpolant(mesh, y).values.copy()
    vals[mesh.boundary_nodes] = l2_projection_Qh(mesh, g).values
    return FieldFunction(mesh, vals)


def steklov_poincare_Nh(mesh: TriMesh, z_h: BoundaryFunction) -> BoundaryFunction:
    """N_h z = normal derivative of the harmonic extension of z.

    Symmetric positive semidefinite with kernel exactly the constants;
    <N_h z, z> equals the squared H^{1/2} seminorm of z.
    """
    return variational_normal_derivative(mesh, harmonic_extension_Sh(mesh, z_h))


def h_half_seminorm(mesh: TriMesh, z_h: BoundaryFunction) -> float:
    """|z|_{H^{1/2}} realized as the Dirichlet energy of the harmonic
    extension: ||grad S_h z||_{L2(Omega)}."""
    return h1_seminorm(harmonic_extension_Sh(mesh, z_h))


def h_minus_half_norm(mesh: TriMesh, v_h: BoundaryFunction) -> float:
    """Dual norm of the H^{1/2} norm realized by N_h + M_boundary.

    Solves the Riesz problem <(N_h + M_b) w, phi> = (v, phi)_Gamma for all
    trace functions phi, then returns sqrt((v, w)_Gamma).
    """
    Mb = assemble_boundary_mass(mesh)
    rhs_b = Mb @ v_h.values
    I = mesh.interior_nodes
    rhs = np.concatenate([np.zeros(I.size), rhs_b])
    w = _riesz_solver(mesh)(rhs)[I.size :]
    return math.sqrt(max(float(v_h.values @ (Mb @ w)), 0.0))
