"""
Сопоставление единиц документа расчёта и СИ.

Единицы указываются суффиксом ключа: dt_days, b_c_bar, value_md и т.д.
Перевод в СИ выполняется один раз при разборе документа.
"""

from __future__ import annotations

from ..core.permeability import MILLIDARCY

BAR = 1e5
CENTIPOISE = 1e-3
DAY = 86400.0
YEAR = 365.0 * DAY
NANOMETER = 1e-9

SUFFIX_TO_SI = {
    "_md": MILLIDARCY,
    "_bar": BAR,
    "_cp": CENTIPOISE,
    "_days": DAY,
    "_nm": NANOMETER,
}

# Множители для значений из файла проницаемости
FILE_UNITS = {
    "md": MILLIDARCY,
    "m2": 1.0,
}

CAPILLARY_MODE_ALIASES = {
    "linearized": "linearized_coupled",
    "lagged": "lagged_explicit",
}


def unit_factor(key: str) -> float:
    """Множитель перевода в СИ по суффиксу ключа; для ключей в СИ равен 1."""
    for suffix, factor in SUFFIX_TO_SI.items():
        if key.endswith(suffix):
            return factor
    return 1.0


def to_si(key: str, value):
    """Переводит скаляр или список скаляров; None остаётся None."""
    if value is None:
        return None
    factor = unit_factor(key)
    if isinstance(value, (list, tuple)):
        return [float(v) * factor for v in value]
    return float(value) * factor


def normalize_capillary_mode(name: str) -> str:
    return CAPILLARY_MODE_ALIASES.get(name, name)
