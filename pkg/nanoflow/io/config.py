"""
Разбор документа расчёта (JSON) в SimulationConfig.

Документ накладывается на текущие значения общего объекта nanoflow.settings.settings.
Неизвестные ключи и отсутствующие обязательные ключи отклоняются
с полным путём ключа, величины переводятся в СИ по суффиксам ключей.
"""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path

from ..core.errors import ConfigurationError
from ..core.flow_solver import IterationControls
from ..core.grid import BoundarySegment
from ..core.nanoparticle_transport import NanoparticleParams
from ..core.petrophysics import RockFluidParams
from ..core.simulation import PermeabilityScenario, SimulationConfig
from ..core.sparse_linear import LinearSolveControls
from ..settings import REQUIRED_KEYS, settings
from .units import DAY, FILE_UNITS, normalize_capillary_mode, to_si

logger = logging.getLogger(__name__)

SEGMENT_KEYS = ("edge", "kind", "start", "stop", "pressure_bar", "flux_m_s", "saturation", "concentration")

# Переопределения из командной строки: имя опции -> путь ключа
OVERRIDE_KEYS = {
    "until_pvi": "time.target_pvi",
    "seed": "permeability.seed",
    "capillary_mode": "iteration.capillary_mode",
    "snapshot_every_pvi": "output.snapshot_every_pvi",
}


def read_document(path: str | Path) -> dict:
    """Читает JSON; пустой файл считается пустым документом."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"Не удалось прочитать конфигурацию {path}: {exc}") from exc
    if not text.strip():
        return {}
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: строка {exc.lineno}, столбец {exc.colno}: {exc.msg}", key_path=f"line {exc.lineno}"
        ) from exc
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path}: корень документа должен быть объектом")
    return document


def _has_key(document: dict, key: str) -> bool:
    node = document
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            return False
        node = node[part]
    return True


def _merge(defaults: dict, document: dict, prefix: str, problems: list[str]) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in document.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            problems.append(f"{path}: неизвестный ключ")
        elif isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                problems.append(f"{path}: ожидался раздел")
            else:
                merged[key] = _merge(defaults[key], value, f"{path}.", problems)
        else:
            merged[key] = value
    return merged


def apply_overrides(document: dict, overrides: dict | None) -> dict:
    """Записывает заданные (не None) переопределения поверх документа."""
    document = copy.deepcopy(document)
    for option, value in (overrides or {}).items():
        if value is None:
            continue
        key = OVERRIDE_KEYS.get(option, option)
        section, _, name = key.rpartition(".")
        node = document
        for part in filter(None, section.split(".")):
            node = node.setdefault(part, {})
        node[name] = value
    return document


def resolve_document(document: dict) -> dict:
    """Проверяет ключи и возвращает полный документ с подставленными значениями по умолчанию."""
    problems = [f"{key}: обязательный ключ отсутствует" for key in REQUIRED_KEYS if not _has_key(document, key)]
    merged = _merge(settings.document(), document, "", problems)
    if problems:
        raise ConfigurationError(
            "Ошибки в документе расчёта:\n  " + "\n  ".join(problems),
            key_path=problems[0].split(":")[0],
            problems=problems,
        )
    return merged


class _Reader:
    """Достаёт типизированные значения с путём ключа в сообщениях об ошибках."""

    def __init__(self, document: dict):
        self.document = document

    def raw(self, key: str):
        section, name = key.split(".", 1)
        return self.document[section][name]

    def number(self, key: str, optional: bool = False):
        value = self.raw(key)
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: ожидалось число, получено {value!r}", key_path=key)
        return to_si(key, value)

    def integer(self, key: str) -> int:
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: ожидалось целое число, получено {value!r}", key_path=key)
        return value

    def numbers(self, key: str, length: int | None = None) -> list[float]:
        value = self.raw(key)
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigurationError(f"{key}: ожидался список чисел, получено {value!r}", key_path=key)
        if length is not None and len(value) != length:
            raise ConfigurationError(f"{key}: ожидалось {length} значения, получено {len(value)}", key_path=key)
        return to_si(key, value)

    def text(self, key: str) -> str | None:
        value = self.raw(key)
        if value is not None and not isinstance(value, str):
            raise ConfigurationError(f"{key}: ожидалась строка, получено {value!r}", key_path=key)
        return value

    def flag(self, key: str) -> bool:
        value = self.raw(key)
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: ожидалось true или false, получено {value!r}", key_path=key)
        return value


def _segments(raw) -> tuple[BoundarySegment, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise ConfigurationError("boundaries.segments: ожидался список участков", key_path="boundaries.segments")
    segments = []
    for index, item in enumerate(raw):
        path = f"boundaries.segments[{index}]"
        if not isinstance(item, dict):
            raise ConfigurationError(f"{path}: ожидался объект", key_path=path)
        unknown = sorted(set(item) - set(SEGMENT_KEYS))
        if unknown:
            raise ConfigurationError(f"{path}.{unknown[0]}: неизвестный ключ", key_path=f"{path}.{unknown[0]}")
        if "edge" not in item:
            raise ConfigurationError(f"{path}.edge: обязательный ключ отсутствует", key_path=f"{path}.edge")
        data = dict(item)
        data["pressure"] = to_si("pressure_bar", data.pop("pressure_bar", 0.0))
        data["flux"] = data.pop("flux_m_s", 0.0)
        segments.append(BoundarySegment.from_dict(data))
    return tuple(segments)


def build_config(document: dict, base_dir: str | Path = ".") -> SimulationConfig:
    """Строит и проверяет SimulationConfig из полного документа."""
    base_dir = Path(base_dir)
    r = _Reader(document)

    mu_w = r.number("rock_fluid.mu_w_cp")
    rock = RockFluidParams(
        s_wr=r.number("rock_fluid.s_wr"),
        s_nr=r.number("rock_fluid.s_nr"),
        a=r.number("rock_fluid.a"),
        b=r.number("rock_fluid.b"),
        k0_rw=r.number("rock_fluid.k0_rw"),
        k0_rn=r.number("rock_fluid.k0_rn"),
        mu_w=mu_w,
        mu_n=r.number("rock_fluid.mu_n_cp"),
        b_c=r.number("rock_fluid.b_c_bar"),
        phi0=r.number("rock_fluid.phi0"),
        k_f=r.number("rock_fluid.k_f"),
        l=r.number("rock_fluid.l"),
        gamma_f=r.number("rock_fluid.gamma_f"),
        rho_w=r.number("rock_fluid.rho_w_kg_m3"),
        rho_n=r.number("rock_fluid.rho_n_kg_m3"),
        gravity=tuple(r.numbers("rock_fluid.gravity_m_s2", 2)),
    )
    nano = NanoparticleParams(
        gamma_d=r.number("nanoparticles.gamma_d_per_m"),
        gamma_e=r.number("nanoparticles.gamma_e_per_m"),
        gamma_pt=r.number("nanoparticles.gamma_pt_per_m"),
        u_c=r.number("nanoparticles.u_c_m_s"),
        diffusivity=r.number("nanoparticles.diffusivity_m2_s", optional=True),
        particle_diameter=r.number("nanoparticles.particle_diameter_nm"),
        temperature=r.number("nanoparticles.temperature_k"),
        carrier_viscosity=mu_w,
        c0=r.number("nanoparticles.c0"),
        deposit_density=r.number("nanoparticles.deposit_density_kg_m3"),
    )

    file_units = r.text("permeability.file_units")
    if file_units not in FILE_UNITS:
        raise ConfigurationError(
            f"permeability.file_units: допустимы {', '.join(FILE_UNITS)}", key_path="permeability.file_units"
        )
    path = r.text("permeability.path")
    if path is not None and not Path(path).is_absolute():
        path = str(base_dir / path)
    blocks = r.raw("permeability.blocks")
    if not isinstance(blocks, list) or not all(isinstance(b, int) and not isinstance(b, bool) for b in blocks):
        raise ConfigurationError("permeability.blocks: ожидался список целых", key_path="permeability.blocks")
    scenario = PermeabilityScenario(
        kind=r.text("permeability.scenario"),
        value=r.number("permeability.value_md"),
        layout=r.text("permeability.layout"),
        blocks=tuple(blocks),
        values=tuple(r.numbers("permeability.values_md", 2)),
        k_min=r.number("permeability.k_min_md"),
        k_max=r.number("permeability.k_max_md"),
        seed=r.integer("permeability.seed"),
        path=path,
        file_scale=FILE_UNITS[file_units],
    )

    iteration = IterationControls(
        theta_min=r.number("iteration.theta_min"),
        theta_max=r.number("iteration.theta_max"),
        rho=r.number("iteration.rho"),
        tolerance=r.number("iteration.tolerance"),
        max_iterations=r.integer("iteration.max_iterations"),
        capillary_mode=normalize_capillary_mode(r.text("iteration.capillary_mode")),
        concentration_tolerance=r.number("iteration.concentration_tolerance", optional=True),
    )
    max_linear = r.raw("linear_solver.max_iterations")
    linear = LinearSolveControls(
        rel_tol=r.number("linear_solver.rel_tol"),
        abs_tol=r.number("linear_solver.abs_tol"),
        max_iterations=None if max_linear is None else r.integer("linear_solver.max_iterations"),
        method=r.text("linear_solver.method"),
        preconditioner=r.text("linear_solver.preconditioner"),
    )

    end_time = r.number("time.end_time_days", optional=True)
    config = SimulationConfig(
        nx=r.integer("grid.nx"),
        ny=r.integer("grid.ny"),
        lx=r.number("grid.lx_m"),
        ly=r.number("grid.ly_m"),
        rock=rock,
        nano=nano,
        scenario=scenario,
        injection_edge=r.text("boundaries.injection_edge"),
        production_edge=r.text("boundaries.production_edge"),
        rate_pv_per_year=r.number("boundaries.rate_pv_per_year"),
        production_pressure=r.number("boundaries.production_pressure_bar"),
        injection_saturation=r.number("boundaries.injection_saturation", optional=True),
        initial_saturation=r.number("initial.saturation", optional=True),
        boundary_segments=_segments(r.raw("boundaries.segments")),
        dt=r.number("time.dt_days"),
        target_pvi=r.number("time.target_pvi"),
        end_time=end_time,
        iteration=iteration,
        linear=linear,
        snapshot_every_pvi=r.number("output.snapshot_every_pvi", optional=True),
        transport=r.flag("run.transport"),
        run_id=r.text("run.run_id") or "nanoflow",
    )
    if config.nx < 1 or config.ny < 1:
        raise ConfigurationError("grid.nx: nx >= 1 и ny >= 1", key_path="grid.nx")
    if not (config.lx > 0 and config.ly > 0):
        raise ConfigurationError("grid.lx_m: lx > 0 и ly > 0", key_path="grid.lx_m")
    config.validate()
    logger.debug("Конфигурация: сетка %dx%d, dt = %.4g сут", config.nx, config.ny, config.dt / DAY)
    return config


def parse_config(path: str | Path, overrides: dict | None = None) -> SimulationConfig:
    """Читает, дополняет значениями по умолчанию и проверяет документ расчёта."""
    path = Path(path)
    document = resolve_document(apply_overrides(read_document(path), overrides))
    return build_config(document, base_dir=path.parent)
