"""
Экспорт полей в legacy VTK (ASCII, STRUCTURED_POINTS) и плоский CSV.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ..core.grid import StructuredGrid2D
from ..core.petrophysics import RockFluidParams
from ..core.simulation import SimulationState

FLOAT_FORMAT = "%.17g"
SNAPSHOT_COLUMNS = ["i", "j", "x", "y", "Sw", "pw", "C", "v1", "v2", "phi", "K"]
VTK_ARRAYS = ("Sw", "pw", "C", "v1", "v2", "phi", "K")


@dataclass(frozen=True)
class StepMeta:
    step: int
    time_s: float
    pvi: float


def snapshot_fields(state: SimulationState, grid: StructuredGrid2D, params: RockFluidParams) -> pd.DataFrame:
    """Таблица значений по ячейкам в порядке id = j * nx + i."""
    ij = grid.cell_ij(np.arange(grid.n_cells))
    return pd.DataFrame(
        {
            "i": ij[0],
            "j": ij[1],
            "x": grid.cell_centers[:, 0],
            "y": grid.cell_centers[:, 1],
            "Sw": state.saturation,
            "pw": state.water_pressure(grid, params),
            "C": state.nano.concentration,
            "v1": state.nano.v1,
            "v2": state.nano.v2,
            "phi": state.porosity,
            "K": state.permeability,
        },
        columns=SNAPSHOT_COLUMNS,
    )


def vtk_header(grid: StructuredGrid2D, meta: StepMeta) -> str:
    return (
        "# vtk DataFile Version 3.0\n"
        f"nanoflow step {meta.step} time_s {meta.time_s:.17g} pvi {meta.pvi:.17g}\n"
        "ASCII\n"
        "DATASET STRUCTURED_POINTS\n"
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1\n"
        "ORIGIN 0 0 0\n"
        f"SPACING {grid.dx:.17g} {grid.dy:.17g} 1\n"
        f"CELL_DATA {grid.n_cells}\n"
    )


def write_vtk(path: str | Path, frame: pd.DataFrame, grid: StructuredGrid2D, meta: StepMeta) -> Path:
    path = Path(path)
    lines = [vtk_header(grid, meta)]
    for name in VTK_ARRAYS:
        lines.append(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        lines.append("".join(f"{value:.17g}\n" for value in frame[name].to_numpy()))
    path.write_text("".join(lines), encoding="ascii")
    return path


def write_field_snapshot(
    state: SimulationState,
    grid: StructuredGrid2D,
    params: RockFluidParams,
    meta: StepMeta,
    directory: str | Path,
    write_vtk_file: bool = True,
    write_csv_file: bool = True,
) -> list[Path]:
    """Пишет snapshot_<step>.vtk и snapshot_<step>.csv, возвращает пути записанных файлов."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = snapshot_fields(state, grid, params)
    stem = f"snapshot_{meta.step:07d}"
    written = []
    if write_vtk_file:
        written.append(write_vtk(directory / f"{stem}.vtk", frame, grid, meta))
    if write_csv_file:
        csv_path = directory / f"{stem}.csv"
        frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
        written.append(csv_path)
    return written


def read_field_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
