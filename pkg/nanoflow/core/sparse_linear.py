"""
Сборка разреженных систем и их решение.

Матрицы хранятся в формате CSR (scipy.sparse). Решатель выбирается по
LinearSolveControls.method: предобусловленные методы Крылова (CG для
симметричных систем, BiCGStab для несимметричных), прямой плотный метод
для малых систем и прямой разреженный (SuperLU).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigurationError, LinearSolverError, SparseAssemblyError

logger = logging.getLogger(__name__)

ITERATIVE_KRYLOV = "iterative_krylov"
DENSE_DIRECT = "dense_direct"
SPARSE_DIRECT = "sparse_direct"
METHODS = (ITERATIVE_KRYLOV, DENSE_DIRECT, SPARSE_DIRECT)
PRECONDITIONERS = ("auto", "jacobi", "ilu", "none")

DENSE_DIRECT_LIMIT = 400
REFINEMENT_ROUNDS = 3


@dataclass(frozen=True)
class LinearSolveControls:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iterations: int | None = None
    method: str = ITERATIVE_KRYLOV
    preconditioner: str = "auto"

    def validate(self) -> None:
        problems = []
        if not self.rel_tol > 0:
            problems.append("linear_solver.rel_tol: rel_tol > 0")
        if not self.abs_tol > 0:
            problems.append("linear_solver.abs_tol: abs_tol > 0")
        if self.max_iterations is not None and self.max_iterations < 1:
            problems.append("linear_solver.max_iterations: max_iterations >= 1")
        if self.method not in METHODS:
            problems.append(f"linear_solver.method: one of {', '.join(METHODS)}")
        if self.preconditioner not in PRECONDITIONERS:
            problems.append(f"linear_solver.preconditioner: one of {', '.join(PRECONDITIONERS)}")
        if problems:
            raise ConfigurationError(
                "Некорректные настройки линейного решателя: " + "; ".join(problems),
                key_path=problems[0].split(":")[0],
                problems=problems,
            )

    def iteration_limit(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 10 * n


@dataclass
class SparseSystem:
    """Квадратная система A·x = b. symmetric выбирает CG вместо BiCGStab."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    symmetric: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.rhs - self.matrix @ x


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    residual_norm: float = 0.0
    rhs_norm: float = 0.0
    converged: bool = True
    residual_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "rhs_norm": self.rhs_norm,
            "converged": self.converged,
        }


def assemble(rows, cols, vals, n: int, rhs=None, symmetric: bool = False) -> SparseSystem:
    """Собирает CSR-матрицу из триплетов; повторяющиеся (row, col) суммируются."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (rows.size == cols.size == vals.size):
        raise SparseAssemblyError(f"Длины триплетов не совпадают: {rows.size}, {cols.size}, {vals.size}")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise SparseAssemblyError(f"Индекс триплета вне диапазона [0, {n})")
    if not np.all(np.isfinite(vals)):
        raise SparseAssemblyError("Нечисловое значение среди коэффициентов матрицы")

    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()

    b = np.zeros(n) if rhs is None else np.asarray(rhs, dtype=float).copy()
    if b.shape != (n,):
        raise SparseAssemblyError(f"Правая часть имеет форму {b.shape}, ожидалось ({n},)")
    if not np.all(np.isfinite(b)):
        raise SparseAssemblyError("Нечисловое значение в правой части")
    return SparseSystem(matrix, b, symmetric)


def pin_rows(system: SparseSystem, rows, values) -> SparseSystem:
    """Заменяет строки диагональными и исключает соответствующие столбцы.

    Диагональ закреплённой строки равна наибольшему модулю диагонали
    матрицы. Значения values переносятся в правую часть, поэтому
    симметрия сохраняется.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    values = np.broadcast_to(np.asarray(values, dtype=float), rows.shape)
    pinned = np.zeros(system.n, dtype=bool)
    pinned[rows] = True
    fixed = np.zeros(system.n)
    fixed[rows] = values

    weight = float(np.abs(system.matrix.diagonal()).max(initial=0.0)) or 1.0
    keep = sparse.diags((~pinned).astype(float))
    matrix = (keep @ system.matrix @ keep + sparse.diags(weight * pinned)).tocsr()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    rhs = system.rhs - system.matrix @ fixed
    rhs[pinned] = weight * fixed[pinned]
    return SparseSystem(matrix, rhs, system.symmetric)


def is_m_matrix_pattern(matrix, tol: float = 1e-12) -> bool:
    """Внедиагональные элементы неположительны, суммы по строкам неотрицательны."""
    coo = sparse.coo_matrix(matrix)
    diag = np.abs(coo.diagonal())
    scale = tol * max(float(diag.max(initial=0.0)), 1.0)
    off = coo.row != coo.col
    if np.any(coo.data[off] > scale):
        return False
    row_sums = np.asarray(coo.sum(axis=1)).ravel()
    return bool(np.all(row_sums >= -scale))


def _preconditioner(matrix: sparse.csr_matrix, kind: str, symmetric: bool):
    if kind == "auto":
        kind = "jacobi" if symmetric else "ilu"
    if kind == "none":
        return None
    if kind == "ilu":
        try:
            factor = spla.spilu(matrix.tocsc())
            return spla.LinearOperator(matrix.shape, factor.solve)
        except RuntimeError as exc:
            logger.warning("ILU недоступно (%s), используется предобуславливатель Якоби", exc)
    diag = matrix.diagonal()
    diag = np.where(diag != 0.0, diag, 1.0)
    return sparse.diags(1.0 / diag)


def _krylov(system: SparseSystem, controls: LinearSolveControls, x0: np.ndarray, target: float, report: SolveReport):
    matrix, b = system.matrix, system.rhs
    b_norm = report.rhs_norm
    maxiter = controls.iteration_limit(system.n)
    preconditioner = _preconditioner(matrix, controls.preconditioner, system.symmetric)
    solver = spla.cg if system.symmetric else spla.bicgstab
    # Критерий scipy: ||r|| <= max(rtol*||b||, atol), то же, что и target
    rtol = target / b_norm if b_norm > 0 else 0.0

    start = len(report.residual_history)

    def track(xk):
        report.residual_history.append(float(np.linalg.norm(b - matrix @ xk)))

    x, info = solver(matrix, b, x0=x0, rtol=rtol, atol=target, maxiter=maxiter, M=preconditioner, callback=track)
    report.iterations += len(report.residual_history) - start
    if info != 0:
        reason = "исчерпан лимит итераций" if info > 0 else "вырождение метода"
        raise LinearSolverError(
            f"{solver.__name__}: {reason} ({maxiter}), невязка "
            f"{report.residual_history[-1] if report.residual_history else float('nan'):.3e} > {target:.3e}",
            residual_history=list(report.residual_history),
            iterations=report.iterations,
        )
    return x


def solve(system: SparseSystem, controls: LinearSolveControls | None = None, x0=None):
    """Решает систему и проверяет итоговую невязку ||A·x − b|| <= max(rel_tol·||b||, abs_tol).

    Возвращает (x, SolveReport). При несходимости бросает LinearSolverError
    с историей невязок.
    """
    controls = controls or LinearSolveControls()
    n = system.n
    b = system.rhs
    b_norm = float(np.linalg.norm(b))
    target = max(controls.rel_tol * b_norm, controls.abs_tol)
    report = SolveReport(method=controls.method, rhs_norm=b_norm)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()

    if controls.method == DENSE_DIRECT:
        if n > DENSE_DIRECT_LIMIT:
            raise ConfigurationError(
                f"Прямой плотный метод допустим только при n <= {DENSE_DIRECT_LIMIT}, получено n = {n}",
                key_path="linear_solver.method",
            )
        try:
            x = np.linalg.solve(system.matrix.toarray(), b)
        except np.linalg.LinAlgError as exc:
            raise LinearSolverError(f"Плотная матрица вырождена: {exc}") from exc
    elif controls.method == SPARSE_DIRECT:
        x = np.atleast_1d(spla.spsolve(system.matrix.tocsc(), b))
    else:
        for _ in range(REFINEMENT_ROUNDS + 1):
            residual = float(np.linalg.norm(system.residual(x)))
            if residual <= target:
                break
            x = _krylov(system, controls, x, target, report)

    if not np.all(np.isfinite(x)):
        raise LinearSolverError("Решение содержит нечисловые значения", iterations=report.iterations)
    report.residual_norm = float(np.linalg.norm(system.residual(x)))
    report.residual_history.append(report.residual_norm)
    if report.residual_norm > target:
        report.converged = False
        raise LinearSolverError(
            f"Невязка {report.residual_norm:.3e} превышает допуск {target:.3e}",
            residual_history=list(report.residual_history),
            iterations=report.iterations,
        )
    return x, report


def solve_correction(system: SparseSystem, x_guess, controls: LinearSolveControls | None = None):
    """Решает нормированную систему для поправки: Â·δ = b̂ − Â·x_guess.

    Все строки делятся на один общий множитель (наибольший модуль диагонали),
    поэтому симметрия сохраняется. Допуски controls относятся к системе
    для поправки. При нулевой невязке поправка не вычисляется.
    """
    controls = controls or LinearSolveControls()
    x_guess = np.asarray(x_guess, dtype=float)
    scale = float(np.abs(system.matrix.diagonal()).max(initial=0.0))
    if scale <= 0.0 or not np.isfinite(scale):
        raise LinearSolverError("Матрица системы не имеет ненулевой диагонали")
    scaled = SparseSystem((system.matrix / scale).tocsr(), system.rhs / scale, system.symmetric)
    correction_rhs = scaled.residual(x_guess)
    if not np.any(correction_rhs):
        return x_guess.copy(), SolveReport(method=controls.method)

    delta, report = solve(SparseSystem(scaled.matrix, correction_rhs, system.symmetric), controls)
    return x_guess + delta, report
