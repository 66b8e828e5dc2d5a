"""
Форматы файлов: документ расчёта, снимки полей, временной ряд, манифест.
"""

from .config import parse_config
from .manifest import OutputManifest, write_failed_step
from .snapshots import StepMeta, write_field_snapshot
from .timeseries import write_timeseries

__all__ = [
    "parse_config",
    "write_field_snapshot",
    "write_timeseries",
    "OutputManifest",
    "write_failed_step",
    "StepMeta",
]
