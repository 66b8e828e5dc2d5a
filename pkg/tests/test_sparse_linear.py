"""
Тесты сборки и решения разреженных систем.
"""

import os
import sys

import numpy as np
import pytest
from scipy import sparse

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from nanoflow.core.errors import ConfigurationError, LinearSolverError, SparseAssemblyError
from nanoflow.core.sparse_linear import (
    DENSE_DIRECT,
    ITERATIVE_KRYLOV,
    SPARSE_DIRECT,
    LinearSolveControls,
    SparseSystem,
    assemble,
    is_m_matrix_pattern,
    pin_rows,
    solve,
    solve_correction,
)


def _laplacian_1d(n, shift=0.0):
    main = np.full(n, 2.0 + shift)
    off = np.full(n - 1, -1.0)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def test_assemble_sums_duplicates():
    system = assemble([0, 0, 1, 1, 0], [0, 0, 1, 0, 1], [1.0, 2.0, 4.0, -1.0, -1.0], 2, rhs=[1.0, 2.0])
    assert np.allclose(system.matrix.toarray(), [[3.0, -1.0], [-1.0, 4.0]])
    assert system.n == 2
    assert np.allclose(system.rhs, [1.0, 2.0])
    print("✓ test_assemble_sums_duplicates passed")


def test_assemble_rejects_bad_triplets():
    with pytest.raises(SparseAssemblyError):
        assemble([0, 2], [0, 0], [1.0, 1.0], 2)
    with pytest.raises(SparseAssemblyError):
        assemble([0], [0], [np.nan], 1)
    with pytest.raises(SparseAssemblyError):
        assemble([0, 1], [0], [1.0, 1.0], 2)
    with pytest.raises(SparseAssemblyError):
        assemble([0], [0], [1.0], 1, rhs=[1.0, 2.0])
    print("✓ test_assemble_rejects_bad_triplets passed")


def test_methods_agree_on_spd_system():
    n = 50
    matrix = _laplacian_1d(n, shift=0.01)
    rhs = np.sin(np.linspace(0.0, 3.0, n))
    exact = np.linalg.solve(matrix.toarray(), rhs)
    for method in (ITERATIVE_KRYLOV, DENSE_DIRECT, SPARSE_DIRECT):
        x, report = solve(SparseSystem(matrix, rhs, symmetric=True), LinearSolveControls(method=method))
        assert np.allclose(x, exact, rtol=1e-6, atol=1e-10), method
        assert report.converged
        assert report.residual_norm <= 1e-10 * np.linalg.norm(rhs)
    print("✓ test_methods_agree_on_spd_system passed")


def test_bicgstab_on_nonsymmetric_system():
    n = 40
    # Неявная схема против потока: диагональное преобладание по строкам
    advection = sparse.diags([np.full(n - 1, -1.5)], [-1], format="csr")
    matrix = (_laplacian_1d(n, shift=2.0) + advection).tocsr()
    rhs = np.linspace(1.0, 2.0, n)
    exact = np.linalg.solve(matrix.toarray(), rhs)
    for preconditioner in ("auto", "jacobi", "ilu", "none"):
        controls = LinearSolveControls(preconditioner=preconditioner)
        x, report = solve(SparseSystem(matrix, rhs, symmetric=False), controls)
        assert np.allclose(x, exact, rtol=1e-7), preconditioner
        assert report.iterations > 0
    print("✓ test_bicgstab_on_nonsymmetric_system passed")


def test_iteration_limit_raises_with_history():
    n = 200
    matrix = _laplacian_1d(n)
    rhs = np.ones(n)
    controls = LinearSolveControls(max_iterations=2, preconditioner="none")
    with pytest.raises(LinearSolverError) as info:
        solve(SparseSystem(matrix, rhs, symmetric=True), controls)
    assert info.value.residual_history
    assert info.value.iterations >= 1
    print("✓ test_iteration_limit_raises_with_history passed")


def test_dense_direct_size_limit():
    matrix = sparse.identity(401, format="csr")
    with pytest.raises(ConfigurationError):
        solve(SparseSystem(matrix, np.ones(401), True), LinearSolveControls(method=DENSE_DIRECT))
    print("✓ test_dense_direct_size_limit passed")


def test_pin_rows_keeps_symmetry():
    n = 6
    # Лапласиан с условиями Неймана вырожден, закрепление одной строки делает его невырожденным
    matrix = _laplacian_1d(n)
    matrix = matrix - sparse.diags(np.asarray(matrix.sum(axis=1)).ravel())
    rhs = np.zeros(n)
    pinned = pin_rows(SparseSystem(matrix.tocsr(), rhs, True), [0], [3.0])
    dense = pinned.matrix.toarray()
    assert np.allclose(dense, dense.T)
    assert dense[0, 0] == 2.0
    assert np.all(dense[0, 1:] == 0.0)
    x, _ = solve(pinned, LinearSolveControls(method=DENSE_DIRECT))
    assert np.allclose(x, 3.0)
    print("✓ test_pin_rows_keeps_symmetry passed")


def test_solve_correction_matches_direct_solution():
    n = 30
    matrix = (_laplacian_1d(n, shift=0.1) * 1e-12).tocsr()
    rhs = np.linspace(-1.0, 1.0, n) * 1e-9
    exact = np.linalg.solve(matrix.toarray(), rhs)
    guess = exact + 1e-3 * np.cos(np.arange(n))
    x, report = solve_correction(SparseSystem(matrix, rhs, True), guess)
    assert np.allclose(x, exact, rtol=1e-8)
    assert report.iterations > 0

    # Единичная диагональ: масштаб равен 1 и невязка точного решения равна нулю
    unit = (_laplacian_1d(n, shift=0.1) / 2.1).tocsr()
    same, report = solve_correction(SparseSystem(unit, unit @ guess, True), guess)
    assert np.array_equal(same, guess)
    assert report.iterations == 0
    print("✓ test_solve_correction_matches_direct_solution passed")


def test_m_matrix_pattern():
    assert is_m_matrix_pattern(_laplacian_1d(5))
    assert not is_m_matrix_pattern(sparse.csr_matrix([[1.0, 0.5], [-0.5, 1.0]]))
    assert not is_m_matrix_pattern(sparse.csr_matrix([[1.0, -2.0], [-0.5, 1.0]]))
    print("✓ test_m_matrix_pattern passed")


def test_controls_validation():
    with pytest.raises(ConfigurationError) as info:
        LinearSolveControls(method="gauss").validate()
    assert info.value.key_path == "linear_solver.method"
    assert LinearSolveControls().iteration_limit(7) == 70
    print("✓ test_controls_validation passed")


if __name__ == "__main__":
    test_assemble_sums_duplicates()
    test_assemble_rejects_bad_triplets()
    test_methods_agree_on_spd_system()
    test_bicgstab_on_nonsymmetric_system()
    test_iteration_limit_raises_with_history()
    test_dense_direct_size_limit()
    test_pin_rows_keeps_symmetry()
    test_solve_correction_matches_direct_solution()
    test_m_matrix_pattern()
    test_controls_validation()
    print("\n✅ Все тесты линейных решателей пройдены успешно!")
