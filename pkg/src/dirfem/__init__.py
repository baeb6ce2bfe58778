"""P1 finite elements and energy-regularized Dirichlet boundary control.

The package solves, on polygonal domains, the tracking problem

    min  1/2 ||u - u_d||^2  +  nu/2 |z|^2_{H^{1/2}(Gamma)}
    s.t. -Laplace(u) = f,  u = z on Gamma,

with the control regularized in the trace energy norm realized through the
discrete harmonic extension. Public names are re-exported lazily from the
submodules; `import dirfem` stays cheap.
"""

from __future__ import annotations

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    # geometry
    "PolygonalDomain": "geometry",
    "builtin_domain": "geometry",
    "BUILTIN_DOMAIN_NAMES": "geometry",
    # meshing
    "TriMesh": "meshing",
    "initial_mesh": "meshing",
    "triangulate_custom": "meshing",
    "bisect_refine": "meshing",
    "mesh_size": "meshing",
    "prolongate": "meshing",
    "min_triangle_angle": "meshing",
    "save_mesh": "meshing",
    "load_mesh": "meshing",
    # sparse linear algebra
    "SparseMatrix": "sparselin",
    "LinearOperator": "sparselin",
    "assemble_from_triplets": "sparselin",
    "spd_solve": "sparselin",
    "gmres": "sparselin",
    "GmresResult": "sparselin",
    "SolverFailure": "sparselin",
    # fem
    "FieldFunction": "fem",
    "BoundaryFunction": "fem",
    "AnalyticFunction": "fem",
    "assemble_stiffness": "fem",
    "assemble_mass": "fem",
    "assemble_boundary_mass": "fem",
    "load_vector": "fem",
    "boundary_load_vector": "fem",
    "nodal_interpolant": "fem",
    "h1_seminorm": "fem",
    "l2_norm": "fem",
    "boundary_l2_norm": "fem",
    # boundary operators
    "l2_projection_Qh": "boundary",
    "variational_normal_derivative": "boundary",
    "harmonic_extension_Sh": "boundary",
    "zero_extension_Eh": "boundary",
    "modified_interpolant": "boundary",
    "steklov_poincare_Nh": "boundary",
    "h_half_seminorm": "boundary",
    "h_minus_half_norm": "boundary",
    # control
    "ControlProblem": "control",
    "ControlSolution": "control",
    "solve_Pf": "control",
    "apply_Tnu": "control",
    "rhs_gh": "control",
    "solve_control": "control",
    "objective_value": "control",
    # studies
    "StudyConfig": "study",
    "ConvergenceTable": "study",
    "run_control_study": "study",
    "run_bvp_study": "study",
    "compute_eoc": "study",
    "CONTROL_METRICS": "study",
    "BVP_METRICS": "study",
    # analytic builtins
    "analytic_function": "functions",
    "BUILTIN_FUNCTION_NAMES": "functions",
    # figures
    "save_convergence_figure": "figures",
    "save_control_solution_figure": "figures",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module 'dirfem' has no attribute {name!r}") from None
    return getattr(import_module(f".{module}", __name__), name)


def __dir__():
    return __all__
