"""
Одна внешняя итерация итерационной схемы IMPES.

Конечные объёмы с двухточечной аппроксимацией потока (гармоническое
среднее проницаемости на грани) и выбором подвижности против потока
для каждой фазы. Неизвестная давления - потенциал воды Φ_w = p_w + ρ_w·h,
где h = −(g·x).

Знаки: поток на внутренней грани положителен от владельца к соседу,
на граничной грани - наружу из области.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from . import sparse_linear
from .errors import ConfigurationError
from .grid import BOUNDARY_KINDS, DIRICHLET_PRESSURE, NEUMANN_FLUX, StructuredGrid2D
from .petrophysics import (
    RockFluidParams,
    capillary_pressure,
    capillary_pressure_derivative,
    mobilities,
    normalized_saturation,
)

logger = logging.getLogger(__name__)

LINEARIZED_COUPLED = "linearized_coupled"
LAGGED_EXPLICIT = "lagged_explicit"
CAPILLARY_MODES = (LINEARIZED_COUPLED, LAGGED_EXPLICIT)

RELAXATION_SEED = 1.0

_DIRICHLET = BOUNDARY_KINDS.index(DIRICHLET_PRESSURE)
_NEUMANN = BOUNDARY_KINDS.index(NEUMANN_FLUX)


@dataclass(frozen=True)
class IterationControls:
    theta_min: float = 0.1
    theta_max: float = 0.9
    rho: float = 0.2
    tolerance: float = 1e-4
    max_iterations: int = 50
    capillary_mode: str = LINEARIZED_COUPLED
    concentration_tolerance: float | None = None

    def validate(self) -> None:
        problems = []
        if not 0 < self.theta_min <= self.theta_max <= 1:
            problems.append("iteration.theta_min: 0 < theta_min <= theta_max <= 1")
        if not self.rho > 0:
            problems.append("iteration.rho: rho > 0")
        if not self.tolerance > 0:
            problems.append("iteration.tolerance: tolerance > 0")
        if self.max_iterations < 1:
            problems.append("iteration.max_iterations: max_iterations >= 1")
        if self.capillary_mode not in CAPILLARY_MODES:
            problems.append(f"iteration.capillary_mode: one of {', '.join(CAPILLARY_MODES)}")
        if self.concentration_tolerance is not None and not self.concentration_tolerance > 0:
            problems.append("iteration.concentration_tolerance: concentration_tolerance > 0")
        if problems:
            raise ConfigurationError(
                "Некорректные настройки итераций: " + "; ".join(problems),
                key_path=problems[0].split(":")[0],
                problems=problems,
            )


@dataclass
class FlowState:
    """Решение одной итерации: потенциал, потоки по граням и скорости в ячейках."""

    potential: np.ndarray
    saturation: np.ndarray
    total_flux: np.ndarray
    water_flux: np.ndarray
    water_velocity: np.ndarray
    water_speed: np.ndarray


class SaturationUpdate(NamedTuple):
    saturation: np.ndarray
    unclamped: np.ndarray
    clamped_cells: int


@dataclass
class PressureAssembly:
    """Система давления и всё, что нужно, чтобы по её решению восстановить потоки."""

    system: sparse_linear.SparseSystem
    mode: str
    transmissibility: np.ndarray
    water_mobility: np.ndarray
    oil_mobility: np.ndarray
    boundary_potential: np.ndarray
    boundary_gravity: np.ndarray
    neumann_total: np.ndarray
    neumann_water: np.ndarray
    capillary_potential: np.ndarray
    capillary_slope: np.ndarray
    saturation_offset: np.ndarray
    saturation_map: sparse.csr_matrix
    pinned_cell: int | None = None


def elevation(points: np.ndarray, gravity) -> np.ndarray:
    """h = −(g·x): высота в направлении против силы тяжести, умноженная на |g|."""
    return -(np.asarray(points, dtype=float) @ np.asarray(gravity, dtype=float))


def _harmonic(area, d_owner, d_neighbor, k_owner, k_neighbor):
    num = area * k_owner * k_neighbor
    den = d_owner * k_neighbor + d_neighbor * k_owner
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def transmissibilities(grid: StructuredGrid2D, k_field) -> np.ndarray:
    """Двухточечные проводимости всех граней.

    Внутренние грани: area·K_harm/dist с гармоническим средним, взвешенным
    по расстояниям. Граничные: area·K_owner/(половина шага).
    """
    k = np.asarray(k_field, dtype=float)
    owner, neighbor = grid.face_owner, grid.face_neighbor
    k_owner = k[owner]
    k_neighbor = np.where(neighbor >= 0, k[np.maximum(neighbor, 0)], k_owner)
    return _harmonic(grid.face_area, grid.face_owner_distance, grid.face_neighbor_distance, k_owner, k_neighbor)


def face_transmissibility(grid: StructuredGrid2D, k_field, face: int) -> float:
    k = np.asarray(k_field, dtype=float)
    owner, neighbor = int(grid.face_owner[face]), int(grid.face_neighbor[face])
    k_neighbor = k[neighbor] if neighbor >= 0 else k[owner]
    value = _harmonic(
        np.array([grid.face_area[face]]),
        np.array([grid.face_owner_distance[face]]),
        np.array([grid.face_neighbor_distance[face]]),
        np.array([k[owner]]),
        np.array([k_neighbor]),
    )
    return float(value[0])


def upwind_face_mobility(potential_difference, lam_owner, lam_neighbor):
    """Подвижность донорской ячейки; при ΔΦ = 0 берётся владелец."""
    return np.where(np.asarray(potential_difference) >= 0.0, lam_owner, lam_neighbor)


def _laplacian(grid: StructuredGrid2D, coeff: np.ndarray, with_dirichlet: bool) -> sparse.csr_matrix:
    inner = grid.interior_slice
    o, nb, c = grid.face_owner[inner], grid.face_neighbor[inner], coeff[inner]
    rows = [o, nb, o, nb]
    cols = [o, nb, nb, o]
    vals = [c, c, -c, -c]
    if with_dirichlet:
        faces = np.flatnonzero(grid.face_kind == _DIRICHLET)
        rows.append(grid.face_owner[faces])
        cols.append(grid.face_owner[faces])
        vals.append(coeff[faces])
    return sparse_linear.assemble(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), grid.n_cells
    ).matrix


def _scatter(grid: StructuredGrid2D, faces: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.n_cells)
    np.add.at(out, grid.face_owner[faces], values)
    return out


def divergence(grid: StructuredGrid2D, face_flux) -> np.ndarray:
    """Суммарный исходящий поток из каждой ячейки."""
    flux = np.asarray(face_flux, dtype=float)
    out = np.zeros(grid.n_cells)
    np.add.at(out, grid.face_owner, flux)
    inner = grid.interior_slice
    np.add.at(out, grid.face_neighbor[inner], -flux[inner])
    return out


def assemble_pressure_system(
    grid: StructuredGrid2D,
    saturation_k,
    potential_k,
    saturation_n,
    porosity,
    permeability,
    params: RockFluidParams,
    controls: IterationControls,
    dt: float,
) -> PressureAssembly:
    """Собирает систему для Φ_w^{k+1} при подвижностях из S^k.

    В режиме linearized_coupled капиллярный потенциал линеаризуется около
    S^k, а S̃^{k+1} выражается через Φ_w по явной формуле насыщенности:
    S̃ = s0 + G·Φ_w. Матрица L_t + L_n·diag(p_c')·G несимметрична.
    В режиме lagged_explicit Φ_c(S^k) целиком уходит в правую часть.
    """
    sat_k = np.asarray(saturation_k, dtype=float)
    phi_k = np.asarray(potential_k, dtype=float)
    owner, neighbor = grid.face_owner, grid.face_neighbor
    inner = grid.interior_slice
    dirichlet = grid.face_kind == _DIRICHLET
    neumann = grid.face_kind == _NEUMANN

    cell_h = elevation(grid.cell_centers, params.gravity)
    face_h = elevation(grid.face_center, params.gravity)
    density_gap = params.rho_n - params.rho_w

    s_norm = normalized_saturation(sat_k, params)
    cap_potential = capillary_pressure(s_norm, params.b_c) + density_gap * cell_h
    if controls.capillary_mode == LINEARIZED_COUPLED:
        cap_slope = capillary_pressure_derivative(s_norm, params)
    else:
        cap_slope = np.zeros(grid.n_cells)

    mob = mobilities(sat_k, params)
    trans = transmissibilities(grid, permeability)

    # Граница Дирихле: потенциал воды p^D + ρ_w·h и гравитационная добавка для нефти
    boundary_potential = np.where(dirichlet, grid.face_pressure + params.rho_w * face_h, 0.0)
    boundary_gravity = np.where(dirichlet, density_gap * (cell_h[owner] - face_h), 0.0)
    inflow_sat = np.where(np.isnan(grid.face_inflow_saturation), sat_k[owner], grid.face_inflow_saturation)
    inflow_mob = mobilities(inflow_sat, params)

    dphi_w = np.zeros(grid.n_faces)
    dphi_n = np.zeros(grid.n_faces)
    dphi_w[inner] = phi_k[owner[inner]] - phi_k[neighbor[inner]]
    dphi_n[inner] = dphi_w[inner] + cap_potential[owner[inner]] - cap_potential[neighbor[inner]]
    dphi_w[dirichlet] = phi_k[owner[dirichlet]] - boundary_potential[dirichlet]
    dphi_n[dirichlet] = dphi_w[dirichlet] + boundary_gravity[dirichlet]

    neighbor_w = np.where(neighbor >= 0, mob.water[np.maximum(neighbor, 0)], inflow_mob.water)
    neighbor_n = np.where(neighbor >= 0, mob.oil[np.maximum(neighbor, 0)], inflow_mob.oil)
    lam_w = upwind_face_mobility(dphi_w, mob.water[owner], neighbor_w)
    lam_n = upwind_face_mobility(dphi_n, mob.oil[owner], neighbor_n)

    # Граница Неймана: полный поток задан, доля воды f_w(S^N) на входе и f_w владельца на выходе
    inflow = grid.face_inward_flux * grid.face_area
    neumann_total = np.where(neumann, -inflow, 0.0)
    water_fraction = np.where(inflow > 0, inflow_mob.fractional_flow, mob.fractional_flow[owner])
    neumann_water = np.where(neumann, -inflow * water_fraction, 0.0)

    coeff_w = trans * lam_w
    coeff_n = trans * lam_n
    l_water = _laplacian(grid, coeff_w, with_dirichlet=True)
    l_total = _laplacian(grid, coeff_w + coeff_n, with_dirichlet=True)
    l_oil_inner = _laplacian(grid, coeff_n, with_dirichlet=False)

    d_faces = np.flatnonzero(dirichlet)
    n_faces = np.flatnonzero(neumann)
    dirichlet_water = _scatter(grid, d_faces, (coeff_w * boundary_potential)[d_faces])
    dirichlet_total = _scatter(grid, d_faces, ((coeff_w + coeff_n) * boundary_potential)[d_faces])
    dirichlet_gravity = _scatter(grid, d_faces, (coeff_n * boundary_gravity)[d_faces])
    neumann_out_total = _scatter(grid, n_faces, neumann_total[n_faces])
    neumann_out_water = _scatter(grid, n_faces, neumann_water[n_faces])

    step_scale = dt / (np.asarray(porosity, dtype=float) * grid.cell_area)
    saturation_offset = np.asarray(saturation_n, dtype=float) + step_scale * (dirichlet_water - neumann_out_water)
    saturation_map = (-sparse.diags(step_scale) @ l_water).tocsr()

    rhs = dirichlet_total - dirichlet_gravity - neumann_out_total
    rhs -= l_oil_inner @ (cap_potential + cap_slope * (saturation_offset - sat_k))
    symmetric = controls.capillary_mode == LAGGED_EXPLICIT or not np.any(cap_slope)
    if symmetric:
        matrix = l_total
    else:
        matrix = (l_total + l_oil_inner @ sparse.diags(cap_slope) @ saturation_map).tocsr()
        matrix.sort_indices()
    system = sparse_linear.SparseSystem(matrix, rhs, symmetric)

    pinned = None
    if not grid.has_dirichlet:
        scale = float(np.abs(neumann_total).sum())
        imbalance = float(neumann_total.sum())
        if abs(imbalance) > 1e-12 * max(scale, np.finfo(float).tiny):
            raise ConfigurationError(
                f"Нет граней Дирихле, а потоки на границе не сбалансированы ({imbalance:.3e} м²/с); "
                "задайте хотя бы одну грань с давлением или согласованные потоки",
                key_path="boundaries",
            )
        pinned = 0
        system = sparse_linear.pin_rows(system, [pinned], [phi_k[pinned]])

    return PressureAssembly(
        system=system,
        mode=controls.capillary_mode,
        transmissibility=trans,
        water_mobility=lam_w,
        oil_mobility=lam_n,
        boundary_potential=boundary_potential,
        boundary_gravity=boundary_gravity,
        neumann_total=neumann_total,
        neumann_water=neumann_water,
        capillary_potential=cap_potential,
        capillary_slope=cap_slope,
        saturation_offset=saturation_offset,
        saturation_map=saturation_map,
        pinned_cell=pinned,
    )


def solve_pressure(assembly: PressureAssembly, potential_guess, controls: sparse_linear.LinearSolveControls):
    """Решает систему давления относительно поправки к предыдущей итерации."""
    return sparse_linear.solve_correction(assembly.system, potential_guess, controls)


def cell_velocities(grid: StructuredGrid2D, face_flux) -> np.ndarray:
    """Вектор скорости в ячейке: полусумма скоростей на двух гранях каждого направления."""
    speed = np.asarray(face_flux, dtype=float) / grid.face_area
    vectors = speed[:, None] * grid.face_normal
    out = np.zeros((grid.n_cells, 2))
    np.add.at(out, grid.face_owner, vectors)
    inner = grid.interior_slice
    np.add.at(out, grid.face_neighbor[inner], vectors[inner])
    return 0.5 * out


def compute_fluxes_and_velocities(
    grid: StructuredGrid2D, assembly: PressureAssembly, potential, saturation_k
) -> FlowState:
    """Потоки по граням из решённого потенциала и те же подвижности, что при сборке."""
    potential = np.asarray(potential, dtype=float)
    owner, neighbor = grid.face_owner, grid.face_neighbor
    inner = grid.interior_slice
    dirichlet = grid.face_kind == _DIRICHLET
    neumann = grid.face_kind == _NEUMANN

    cap = assembly.capillary_potential
    if assembly.mode == LINEARIZED_COUPLED:
        predicted = assembly.saturation_offset + assembly.saturation_map @ potential
        cap = cap + assembly.capillary_slope * (predicted - np.asarray(saturation_k, dtype=float))

    coeff_w = assembly.transmissibility * assembly.water_mobility
    coeff_n = assembly.transmissibility * assembly.oil_mobility
    water = np.zeros(grid.n_faces)
    oil = np.zeros(grid.n_faces)

    dphi = potential[owner[inner]] - potential[neighbor[inner]]
    water[inner] = coeff_w[inner] * dphi
    oil[inner] = coeff_n[inner] * (dphi + cap[owner[inner]] - cap[neighbor[inner]])

    dphi_b = potential[owner[dirichlet]] - assembly.boundary_potential[dirichlet]
    water[dirichlet] = coeff_w[dirichlet] * dphi_b
    oil[dirichlet] = coeff_n[dirichlet] * (dphi_b + assembly.boundary_gravity[dirichlet])

    water[neumann] = assembly.neumann_water[neumann]
    oil[neumann] = assembly.neumann_total[neumann] - assembly.neumann_water[neumann]

    velocity = cell_velocities(grid, water)
    return FlowState(
        potential=potential,
        saturation=np.asarray(saturation_k, dtype=float),
        total_flux=water + oil,
        water_flux=water,
        water_velocity=velocity,
        water_speed=np.hypot(velocity[:, 0], velocity[:, 1]),
    )


def explicit_saturation_update(
    grid: StructuredGrid2D, saturation_n, porosity, water_flux, dt: float, params: RockFluidParams
) -> SaturationUpdate:
    """S̃ = S^n − Δt/(φ·A)·div(F_w), затем ограничение в [S_wr, 1 − S_nr]."""
    unclamped = np.asarray(saturation_n, dtype=float) - dt / (
        np.asarray(porosity, dtype=float) * grid.cell_area
    ) * divergence(grid, water_flux)
    clamped = np.clip(unclamped, params.s_wr, 1.0 - params.s_nr)
    count = int(np.count_nonzero(clamped != unclamped))
    if count:
        logger.debug("Насыщенность ограничена в %d ячейках", count)
    return SaturationUpdate(clamped, unclamped, count)


def compute_relaxation_factor(delta_prev: float, delta_curr: float, controls: IterationControls) -> float:
    """θ = clamp(ρ·δ_prev/δ_curr, θ_min, θ_max)."""
    theta = controls.rho * delta_prev / max(delta_curr, 1e-30)
    return float(min(max(theta, controls.theta_min), controls.theta_max))


def relax_saturation(saturation_k, saturation_tilde, theta: float):
    saturation_k = np.asarray(saturation_k, dtype=float)
    return saturation_k + theta * (np.asarray(saturation_tilde, dtype=float) - saturation_k)
