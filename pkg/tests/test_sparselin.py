import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirfem.fem import assemble_stiffness
from dirfem.sparselin import (
    LinearOperator,
    SolverFailure,
    SparseMatrix,
    assemble_from_triplets,
    factorize,
    gmres,
    spd_solve,
)


def _random_spd(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    return Q @ Q.T + n * np.eye(n)


def test_triplets_sum_duplicates():
    rows = [0, 0, 1, 1, 0]
    cols = [0, 1, 0, 1, 0]
    vals = [1.0, 2.0, 3.0, 4.0, 10.0]
    A = assemble_from_triplets(2, 2, (rows, cols, vals))
    np.testing.assert_array_equal(A.toarray(), [[11.0, 2.0], [3.0, 4.0]])
    assert A.nnz == 4


def test_assembly_is_deterministic(mesh_at):
    """Same mesh in, bit-identical CSR out — no ordering jitter."""
    mesh = mesh_at("omega90", 6)
    A = assemble_stiffness(mesh)
    assert mesh.n_nodes == 81
    assert A.nnz == 497
    # second assembly on an equal but distinct mesh object
    from dirfem.geometry import builtin_domain
    from dirfem.meshing import bisect_refine, initial_mesh

    other = initial_mesh(builtin_domain("omega90"))
    for _ in range(6):
        other = bisect_refine(other)
    B = assemble_stiffness(other)
    np.testing.assert_array_equal(A.values, B.values)
    np.testing.assert_array_equal(A.col_indices, B.col_indices)
    np.testing.assert_array_equal(A.row_offsets, B.row_offsets)


def test_sparse_matrix_basics():
    A = SparseMatrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert A.shape == (2, 2)
    assert A.symmetry_defect() == 0.0
    np.testing.assert_array_equal(A.T.toarray(), A.toarray())
    np.testing.assert_allclose(A @ np.array([1.0, 1.0]), [1.0, 1.0])
    C = A - 0.5 * A
    np.testing.assert_allclose(C.toarray(), 0.5 * A.toarray())
    B = SparseMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert B.symmetry_defect() == 1.0


def test_submatrix_indexing():
    A = SparseMatrix(np.arange(16, dtype=float).reshape(4, 4))
    sub = A.submatrix([1, 3], [0, 2])
    np.testing.assert_array_equal(sub.toarray(), [[4.0, 6.0], [12.0, 14.0]])


def test_spd_solve_matches_dense():
    A = _random_spd(30, seed=1)
    b = np.arange(30, dtype=float)
    x = spd_solve(SparseMatrix(A), b, rel_tol=1e-13)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9)


def test_spd_solve_reports_failure_with_best_iterate():
    A = _random_spd(40, seed=2)
    b = np.ones(40)
    with pytest.raises(SolverFailure) as info:
        spd_solve(SparseMatrix(A), b, rel_tol=1e-15, max_iter=2)
    assert info.value.solution is not None
    assert info.value.solution.shape == (40,)
    assert info.value.iterations >= 1


def test_factorize_direct_path():
    A = _random_spd(25, seed=3)
    solve = factorize(SparseMatrix(A))
    for seed in (0, 1):
        b = np.random.default_rng(seed).standard_normal(25)
        np.testing.assert_allclose(solve(b), np.linalg.solve(A, b), rtol=1e-9)


def test_gmres_matches_dense_nonsymmetric():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((40, 40)) + 8.0 * np.eye(40)
    b = rng.standard_normal(40)
    res = gmres(A, b, rel_tol=1e-12)
    assert res.converged
    assert res.residual <= 1e-12
    np.testing.assert_allclose(res.solution, np.linalg.solve(A, b), rtol=1e-8)


def test_gmres_restarted_converges():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((60, 60)) + 10.0 * np.eye(60)
    b = rng.standard_normal(60)
    res = gmres(A, b, rel_tol=1e-10, restart=5)
    assert res.converged
    np.testing.assert_allclose(res.solution, np.linalg.solve(A, b), rtol=1e-6)


def test_gmres_identity_converges_immediately():
    b = np.array([3.0, -1.0, 2.0])
    res = gmres(np.eye(3), b, rel_tol=1e-14)
    assert res.converged
    assert res.iterations <= 1
    np.testing.assert_allclose(res.solution, b)


def test_gmres_zero_rhs():
    res = gmres(np.eye(4), np.zeros(4))
    assert res.converged
    assert res.iterations == 0
    np.testing.assert_array_equal(res.solution, np.zeros(4))


def test_gmres_preconditioning_changes_nothing_but_speed():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((50, 50)) + 12.0 * np.eye(50)
    b = rng.standard_normal(50)
    M = np.diag(1.0 / np.diag(A))
    plain = gmres(A, b, rel_tol=1e-12)
    precond = gmres(A, b, rel_tol=1e-12, M=M)
    np.testing.assert_allclose(plain.solution, precond.solution, rtol=1e-8)


def test_gmres_iteration_cap_raises_with_iterate():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((80, 80)) + 2.0 * np.eye(80)
    b = rng.standard_normal(80)
    with pytest.raises(SolverFailure) as info:
        gmres(A, b, rel_tol=1e-14, restart=3, max_iters=2)
    assert info.value.solution is not None
    assert np.isfinite(info.value.residual)


def test_linear_operator_checks_dimension():
    op = LinearOperator(3, lambda v: 2.0 * v)
    np.testing.assert_allclose(op @ np.ones(3), 2.0 * np.ones(3))
    with pytest.raises(ValueError, match="dimension"):
        op(np.ones(4))


def test_gmres_accepts_callable_operator():
    A = np.diag([1.0, 2.0, 3.0])
    res = gmres(lambda v: A @ v, np.array([1.0, 4.0, 9.0]), rel_tol=1e-13)
    np.testing.assert_allclose(res.solution, [1.0, 2.0, 3.0], rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=12),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_spd_solve_random_tridiagonal(n, seed):
    """Diagonally dominant tridiagonal systems solve to tolerance."""
    rng = np.random.default_rng(seed)
    off = rng.uniform(-1.0, 1.0, size=n - 1)
    diag = 2.0 + np.abs(off).sum() * np.ones(n)
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    b = rng.standard_normal(n)
    x = spd_solve(SparseMatrix(A), b, rel_tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)
