"""
Исключения симулятора.
"""

from __future__ import annotations


class SimulationError(RuntimeError):
    """Базовая ошибка расчёта."""


class ConfigurationError(SimulationError):
    """Ошибка конфигурации: неверный ключ, значение или граничные условия."""

    def __init__(self, message: str, key_path: str | None = None, problems: list[str] | None = None):
        super().__init__(message)
        self.key_path = key_path
        self.problems = list(problems or [])


class SparseAssemblyError(SimulationError):
    """Ошибка сборки разреженной матрицы."""


class LinearSolverError(SimulationError):
    """Итерационный решатель не достиг заданной невязки."""

    def __init__(self, message: str, residual_history: list[float] | None = None, iterations: int = 0):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
        self.iterations = iterations
        # Заполняется драйвером: отчёт шага, на котором произошёл сбой
        self.report = None


class ConvergenceError(SimulationError):
    """Внешние итерации шага по времени не сошлись."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
