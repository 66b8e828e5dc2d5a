"""
Начальные поля проницаемости K0 для сценариев расчёта.

Поля возвращаются в порядке ячеек сетки (id = j * nx + i) в тех же
единицах, в которых заданы значения; перевод в м² делает вызывающий код.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigurationError

LAYOUTS = ("checkerboard", "bands_x", "bands_y")

MILLIDARCY = 9.869233e-16


def uniform_field(nx: int, ny: int, value: float) -> np.ndarray:
    return np.full(nx * ny, float(value))


def regular_heterogeneous_field(nx: int, ny: int, layout: str, blocks, values) -> np.ndarray:
    """Блочное поле из двух значений.

    checkerboard: blocks = (bx, by): число блоков по x и y, значения
    чередуются как на шахматной доске. bands_x / bands_y: blocks[0] полос,
    перпендикулярных оси x или y соответственно.
    """
    if layout not in LAYOUTS:
        raise ConfigurationError(
            f"Неизвестная раскладка '{layout}', допустимы: {', '.join(LAYOUTS)}",
            key_path="permeability.layout",
        )
    blocks = tuple(int(b) for b in np.atleast_1d(blocks))
    low, high = (float(v) for v in values)
    if any(b < 1 for b in blocks):
        raise ConfigurationError(f"Число блоков должно быть >= 1: {blocks}", key_path="permeability.blocks")

    i = np.tile(np.arange(nx), ny)
    j = np.repeat(np.arange(ny), nx)
    if layout == "checkerboard":
        bx, by = blocks if len(blocks) > 1 else (blocks[0], blocks[0])
        parity = (i * bx // nx + j * by // ny) % 2
    elif layout == "bands_x":
        parity = (i * blocks[0] // nx) % 2
    else:
        parity = (j * blocks[0] // ny) % 2
    return np.where(parity == 0, low, high)


def random_field(nx: int, ny: int, k_min: float, k_max: float, seed: int) -> np.ndarray:
    """Логравномерное распределение между k_min и k_max; одинаковое при одном seed."""
    if not 0 < k_min <= k_max:
        raise ConfigurationError(
            f"Нужно 0 < k_min <= k_max, получено {k_min}, {k_max}", key_path="permeability.k_min_md"
        )
    rng = np.random.default_rng(seed)
    return np.exp(rng.uniform(np.log(k_min), np.log(k_max), size=nx * ny))


def field_from_file(path, nx: int, ny: int) -> np.ndarray:
    """Читает поле из .npy или текстового файла (пробелы или запятые), значения как есть.

    Допустимы формы (ny, nx) и плоский массив длины nx·ny.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Файл проницаемости не найден: {path}", key_path="permeability.path")
    try:
        if path.suffix == ".npy":
            data = np.load(path)
        else:
            delimiter = "," if "," in path.read_text(encoding="utf-8") else None
            data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"Не удалось прочитать поле проницаемости {path}: {exc}", key_path="permeability.path") from exc

    data = np.asarray(data, dtype=float)
    if data.shape not in ((ny, nx), (nx * ny,), (1, nx * ny), (nx * ny, 1)):
        raise ConfigurationError(
            f"Поле в {path} имеет форму {data.shape}, ожидалось ({ny}, {nx}) или ({nx * ny},)",
            key_path="permeability.path",
        )
    field = data.ravel()
    if not np.all(np.isfinite(field)) or np.any(field <= 0):
        raise ConfigurationError(f"Поле в {path} должно быть положительным", key_path="permeability.path")
    return field
