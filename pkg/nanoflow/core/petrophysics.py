"""
Замыкающие соотношения: нормированная насыщенность, капиллярное давление,
относительные фазовые проницаемости, подвижности и модель ухудшения
пористости и проницаемости из-за осевших наночастиц.

Все функции векторизованы и принимают как скаляры, так и массивы numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SATURATION_FLOOR = 1e-4
POROSITY_FLOOR = 1e-3


@dataclass(frozen=True)
class RockFluidParams:
    """Свойства породы и флюидов в СИ."""

    s_wr: float = 0.001
    s_nr: float = 0.001
    a: float = 2.0
    b: float = 2.0
    k0_rw: float = 1.0
    k0_rn: float = 1.0
    mu_w: float = 1e-3
    mu_n: float = 0.45e-3
    b_c: float = 50e5
    phi0: float = 0.3
    k_f: float = 0.6
    l: float = 3.0
    gamma_f: float = 0.01
    rho_w: float = 1000.0
    rho_n: float = 800.0
    gravity: tuple[float, float] = (0.0, 0.0)
    k0: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def mobile_span(self) -> float:
        return 1.0 - self.s_nr - self.s_wr

    @property
    def injection_saturation(self) -> float:
        return 1.0 - self.s_nr

    def validate(self) -> None:
        """Проверяет инварианты; ключи ошибок совпадают с ключами конфигурации."""
        checks = [
            ("rock_fluid.s_wr", self.s_wr >= 0, "S_wr >= 0"),
            ("rock_fluid.s_nr", self.s_nr >= 0, "S_nr >= 0"),
            ("rock_fluid.s_nr", self.s_wr + self.s_nr < 1, "S_wr + S_nr < 1"),
            ("rock_fluid.a", self.a > 0, "a > 0"),
            ("rock_fluid.b", self.b > 0, "b > 0"),
            ("rock_fluid.k0_rw", 0 < self.k0_rw <= 1, "k0_rw in (0, 1]"),
            ("rock_fluid.k0_rn", 0 < self.k0_rn <= 1, "k0_rn in (0, 1]"),
            ("rock_fluid.mu_w_cp", self.mu_w > 0, "mu_w > 0"),
            ("rock_fluid.mu_n_cp", self.mu_n > 0, "mu_n > 0"),
            ("rock_fluid.b_c_bar", self.b_c >= 0, "B_c >= 0"),
            ("rock_fluid.phi0", 0 < self.phi0 < 1, "phi0 in (0, 1)"),
            ("rock_fluid.k_f", 0 <= self.k_f <= 1, "k_f in [0, 1]"),
            ("rock_fluid.l", 2.5 <= self.l <= 3.5, "l in [2.5, 3.5]"),
            ("rock_fluid.gamma_f", self.gamma_f >= 0, "gamma_f >= 0"),
        ]
        problems = [f"{key}: {constraint}" for key, ok, constraint in checks if not ok]
        if self.k0 is not None and not np.all(np.asarray(self.k0) > 0):
            problems.append("permeability: K0 > 0")
        if problems:
            raise ConfigurationError(
                "Нарушены ограничения параметров: " + "; ".join(problems),
                key_path=problems[0].split(":")[0],
                problems=problems,
            )


class Mobilities(NamedTuple):
    water: np.ndarray
    oil: np.ndarray
    total: np.ndarray
    fractional_flow: np.ndarray


def normalized_saturation(sw, params: RockFluidParams):
    """S = (S_w − S_wr)/(1 − S_nr − S_wr), ограниченная снизу SATURATION_FLOOR."""
    s = (np.asarray(sw, dtype=float) - params.s_wr) / params.mobile_span
    return np.clip(s, SATURATION_FLOOR, 1.0)


def capillary_pressure(s, b_c: float):
    """p_c = −B_c·ln(S), Па."""
    return -b_c * np.log(s)


def capillary_pressure_derivative(s, params: RockFluidParams):
    """dp_c/dS_w через нормированную насыщенность, Па."""
    return -params.b_c / (np.asarray(s, dtype=float) * params.mobile_span)


def relative_permeabilities(s, params: RockFluidParams):
    s = np.asarray(s, dtype=float)
    k_rw = params.k0_rw * s ** params.a
    k_rn = params.k0_rn * (1.0 - s) ** params.b
    return k_rw, k_rn


def mobilities(sw, params: RockFluidParams) -> Mobilities:
    k_rw, k_rn = relative_permeabilities(normalized_saturation(sw, params), params)
    lam_w = k_rw / params.mu_w
    lam_n = k_rn / params.mu_n
    lam_t = lam_w + lam_n
    return Mobilities(lam_w, lam_n, lam_t, lam_w / lam_t)


def update_porosity(phi0, v1, v2):
    """φ = φ0 − (v1 + v2) с нижней границей POROSITY_FLOOR."""
    phi = np.asarray(phi0, dtype=float) - (np.asarray(v1, dtype=float) + np.asarray(v2, dtype=float))
    clamped = np.count_nonzero(phi < POROSITY_FLOOR)
    if clamped:
        logger.warning("Пористость ограничена снизу значением %g в %d ячейках", POROSITY_FLOOR, clamped)
        phi = np.maximum(phi, POROSITY_FLOOR)
    return phi


def flow_efficiency(v2, gamma_f: float):
    """Доля незакупоренных пор f = 1 − γ_f·v2 в пределах [0, 1]."""
    return np.clip(1.0 - gamma_f * np.asarray(v2, dtype=float), 0.0, 1.0)


def update_permeability(k0, phi, phi0, f, k_f: float, l: float):
    """K = K0·[(1 − f)·k_f + f·φ/φ0]^l."""
    f = np.asarray(f, dtype=float)
    return np.asarray(k0, dtype=float) * ((1.0 - f) * k_f + f * (np.asarray(phi, dtype=float) / phi0)) ** l


def sigma_to_volume(sigma, rho_b: float):
    """Объём осевших частиц на единицу объёма по их массе σ и плотности ρ_b."""
    return np.asarray(sigma, dtype=float) / rho_b
