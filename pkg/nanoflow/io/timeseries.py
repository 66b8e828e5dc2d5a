"""
Временной ряд отчётов о шагах в CSV.

Колонки фиксированы (TIMESERIES_COLUMNS): поля StepReport и статьи
баланса масс, одна строка на шаг.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import pandas as pd

from ..core.reports import TIMESERIES_COLUMNS, StepReport
from .snapshots import FLOAT_FORMAT

TIMESERIES_FILE = "timeseries.csv"


def timeseries_frame(reports: Iterable[StepReport]) -> pd.DataFrame:
    return pd.DataFrame([report.to_row() for report in reports], columns=TIMESERIES_COLUMNS)


def write_timeseries(reports: Iterable[StepReport], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / TIMESERIES_FILE
    timeseries_frame(reports).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_timeseries(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
