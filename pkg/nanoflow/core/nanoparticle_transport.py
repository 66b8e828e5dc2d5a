"""
Перенос наночастиц одного размера в водной фазе и их удержание.

Концентрация C решается неявно (адвекция против потока, диффузия
с гармоническим средним φ·S·D на внутренних гранях, скорость потерь R
явно как сток). Затем поточечно обновляются объём частиц на стенках пор
v1 (осаждение и срыв) и объём частиц, застрявших в горлах пор v2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import constants

from . import sparse_linear
from .errors import ConfigurationError
from .flow_solver import transmissibilities
from .grid import StructuredGrid2D

logger = logging.getLogger(__name__)

TRANSPORT_SWEEP_TOLERANCE = 1e-10
MAX_TRANSPORT_SWEEPS = 50


def stokes_einstein_diffusivity(temperature: float, viscosity: float, diameter: float) -> float:
    """D = k_B·T/(3π·μ·d), м²/с."""
    return constants.k * temperature / (3.0 * np.pi * viscosity * diameter)


@dataclass(frozen=True)
class NanoparticleParams:
    """Константы переноса и удержания в СИ.

    Если diffusivity равна None, коэффициент диффузии считается по
    формуле Стокса-Эйнштейна из диаметра частиц, температуры и вязкости воды.
    """

    gamma_d: float = 16.0
    gamma_e: float = 30.0
    gamma_pt: float = 1.28
    u_c: float = 4.6e-6
    diffusivity: float | None = 5.6e-8
    particle_diameter: float = 40e-9
    temperature: float = 293.0
    carrier_viscosity: float = 1e-3
    c0: float = 0.0
    deposit_density: float = 2330.0

    @property
    def effective_diffusivity(self) -> float:
        if self.diffusivity is not None:
            return self.diffusivity
        return stokes_einstein_diffusivity(self.temperature, self.carrier_viscosity, self.particle_diameter)

    def validate(self) -> None:
        checks = [
            ("nanoparticles.gamma_d_per_m", self.gamma_d >= 0, "gamma_d >= 0"),
            ("nanoparticles.gamma_e_per_m", self.gamma_e >= 0, "gamma_e >= 0"),
            ("nanoparticles.gamma_pt_per_m", self.gamma_pt >= 0, "gamma_pt >= 0"),
            ("nanoparticles.u_c_m_s", self.u_c >= 0, "u_c >= 0"),
            ("nanoparticles.c0", 0 <= self.c0 < 1, "C0 in [0, 1)"),
            ("nanoparticles.deposit_density_kg_m3", self.deposit_density > 0, "rho_b > 0"),
            ("nanoparticles.particle_diameter_nm", self.particle_diameter > 0, "d > 0"),
            ("nanoparticles.temperature_k", self.temperature > 0, "T > 0"),
        ]
        problems = [f"{key}: {constraint}" for key, ok, constraint in checks if not ok]
        if not self.effective_diffusivity > 0:
            problems.append("nanoparticles.diffusivity_m2_s: D > 0")
        if problems:
            raise ConfigurationError(
                "Нарушены ограничения параметров частиц: " + "; ".join(problems),
                key_path=problems[0].split(":")[0],
                problems=problems,
            )


@dataclass
class NanoState:
    concentration: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    @classmethod
    def empty(cls, n_cells: int) -> "NanoState":
        return cls(np.zeros(n_cells), np.zeros(n_cells), np.zeros(n_cells))

    def copy(self) -> "NanoState":
        return NanoState(self.concentration.copy(), self.v1.copy(), self.v2.copy())


class ConcentrationUpdate(NamedTuple):
    concentration: np.ndarray
    unclamped: np.ndarray
    clamped_cells: int
    report: sparse_linear.SolveReport


def net_loss_rate(speed, concentration, v1, params: NanoparticleParams):
    """R = (γ_d + γ_pt)·|u|·C, минус γ_e·(|u| − u_c)·v1 выше критической скорости."""
    speed = np.asarray(speed, dtype=float)
    excess = np.maximum(speed - params.u_c, 0.0)
    return (params.gamma_d + params.gamma_pt) * speed * np.asarray(concentration, dtype=float) - (
        params.gamma_e * excess * np.asarray(v1, dtype=float)
    )


def assemble_concentration_system(
    grid: StructuredGrid2D,
    porosity,
    saturation_new,
    saturation_n,
    concentration_n,
    concentration_k,
    water_flux,
    speed,
    v1_k,
    params: NanoparticleParams,
    dt: float,
) -> sparse_linear.SparseSystem:
    """Неявная дискретизация уравнения концентрации для C^{k+1}.

    φ^k·(S^{k+1}·C^{k+1} − S^n·C^n)/Δt + div(F_w·C^{k+1}) − div(φ·S·D·grad C^{k+1}) = −R(C^k, v1^k)
    Втекающие граничные грани несут F·C_in, вытекающие чисто адвективны.
    """
    phi = np.asarray(porosity, dtype=float)
    s_new = np.asarray(saturation_new, dtype=float)
    flux = np.asarray(water_flux, dtype=float)
    area = grid.cell_area
    n = grid.n_cells
    cells = np.arange(n)
    inner = grid.interior_slice
    o, nb = grid.face_owner[inner], grid.face_neighbor[inner]

    forward = np.maximum(flux[inner], 0.0)
    backward = np.maximum(-flux[inner], 0.0)
    diffusion = transmissibilities(grid, phi * s_new * params.effective_diffusivity)[inner]

    b_faces = grid.boundary_faces()
    b_owner = grid.face_owner[b_faces]
    outflow = np.maximum(flux[b_faces], 0.0)
    inflow = np.maximum(-flux[b_faces], 0.0)

    rows = np.concatenate((cells, o, nb, nb, o, o, nb, o, nb, b_owner))
    cols = np.concatenate((cells, o, o, nb, nb, o, nb, nb, o, b_owner))
    vals = np.concatenate(
        (
            phi * s_new * area / dt,
            forward,
            -forward,
            backward,
            -backward,
            diffusion,
            diffusion,
            -diffusion,
            -diffusion,
            outflow,
        )
    )

    loss = net_loss_rate(speed, concentration_k, v1_k, params)
    rhs = phi * np.asarray(saturation_n, dtype=float) * np.asarray(concentration_n, dtype=float) * area / dt
    rhs -= loss * area
    np.add.at(rhs, b_owner, inflow * grid.face_inflow_concentration[b_faces])
    return sparse_linear.assemble(rows, cols, vals, n, rhs=rhs, symmetric=False)


def solve_concentration(
    system: sparse_linear.SparseSystem, concentration_guess, controls: sparse_linear.LinearSolveControls
) -> ConcentrationUpdate:
    """Решает систему концентрации; отрицательные значения округления обнуляются."""
    unclamped, report = sparse_linear.solve_correction(system, concentration_guess, controls)
    concentration = np.maximum(unclamped, 0.0)
    count = int(np.count_nonzero(unclamped < 0.0))
    if count:
        logger.debug("Концентрация ограничена нулём в %d ячейках (минимум %.3e)", count, unclamped.min())
    return ConcentrationUpdate(concentration, unclamped, count, report)


def update_v1(v1_n, speed, concentration, params: NanoparticleParams, dt: float):
    """v1 неявно по срыву: (v1^n + Δt·γ_d·|u|·C)/(1 + Δt·γ_e·(|u| − u_c)⁺)."""
    speed = np.asarray(speed, dtype=float)
    gained = np.asarray(v1_n, dtype=float) + dt * params.gamma_d * speed * np.asarray(concentration, dtype=float)
    return gained / (1.0 + dt * params.gamma_e * np.maximum(speed - params.u_c, 0.0))


def update_v2(v2_n, speed, concentration, params: NanoparticleParams, dt: float):
    return np.asarray(v2_n, dtype=float) + dt * params.gamma_pt * np.asarray(speed, dtype=float) * np.asarray(
        concentration, dtype=float
    )


def boundary_particle_rates(grid: StructuredGrid2D, water_flux, concentration) -> tuple[float, float]:
    """Скорости поступления и выноса частиц через границу, м²/с на единицу толщины."""
    flux = np.asarray(water_flux, dtype=float)
    b_faces = grid.boundary_faces()
    injected = float(np.sum(np.maximum(-flux[b_faces], 0.0) * grid.face_inflow_concentration[b_faces]))
    produced = float(
        np.sum(np.maximum(flux[b_faces], 0.0) * np.asarray(concentration, dtype=float)[grid.face_owner[b_faces]])
    )
    return injected, produced


class TransportUpdate(NamedTuple):
    concentration: ConcentrationUpdate
    v1: np.ndarray
    v2: np.ndarray
    loss: np.ndarray
    sweeps: int
    solver_iterations: list[int]


def settle_transport(
    grid: StructuredGrid2D,
    porosity,
    saturation_new,
    saturation_n,
    nano_n: NanoState,
    concentration_guess,
    water_flux,
    speed,
    params: NanoparticleParams,
    dt: float,
    controls: sparse_linear.LinearSolveControls,
) -> TransportUpdate:
    """Согласует сток R в уравнении концентрации с обновлением v1, v2.

    Насыщенность и потоки заморожены. C решается повторно с R по C и v1
    предыдущего прохода, пока относительное изменение C не станет меньше
    TRANSPORT_SWEEP_TOLERANCE. После этого приращения v1 + v2 совпадают
    с Δt·R, и баланс частиц замыкается без поправок.
    """
    concentration_in = np.asarray(concentration_guess, dtype=float)
    solver_iterations = []
    for sweep in range(1, MAX_TRANSPORT_SWEEPS + 1):
        v1_in = update_v1(nano_n.v1, speed, concentration_in, params, dt)
        loss = net_loss_rate(speed, concentration_in, v1_in, params)
        system = assemble_concentration_system(
            grid, porosity, saturation_new, saturation_n, nano_n.concentration, concentration_in,
            water_flux, speed, v1_in, params, dt,
        )
        update = solve_concentration(system, concentration_in, controls)
        solver_iterations.append(update.report.iterations)
        change = float(np.linalg.norm(update.concentration - concentration_in))
        concentration_in = update.concentration
        if change <= TRANSPORT_SWEEP_TOLERANCE * float(np.linalg.norm(concentration_in)):
            break
    else:
        logger.warning(
            "Перенос не согласован за %d проходов: |dC| = %.3e", MAX_TRANSPORT_SWEEPS, change
        )
    v1 = update_v1(nano_n.v1, speed, update.concentration, params, dt)
    v2 = update_v2(nano_n.v2, speed, update.concentration, params, dt)
    return TransportUpdate(update, v1, v2, loss, sweep, solver_iterations)
