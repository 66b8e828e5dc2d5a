"""
Драйвер расчёта: начальные условия, цикл по времени и внешние итерации шага.

Порядок внутри итерации k → k+1: подвижности по S^k, давление, потоки и
скорости, явная насыщенность S̃ и релаксация, неявная концентрация,
поточечные v1 и v2, обновление пористости и проницаемости, проверка
сходимости ||S^{k+1} − S^k||₂ < ε_S. После сходимости перенос частиц
согласуется при замороженных S и потоках (settle_transport).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from . import permeability as perm_fields
from .errors import ConfigurationError, ConvergenceError, LinearSolverError
from .flow_solver import (
    RELAXATION_SEED,
    IterationControls,
    assemble_pressure_system,
    compute_fluxes_and_velocities,
    compute_relaxation_factor,
    elevation,
    explicit_saturation_update,
    relax_saturation,
    solve_pressure,
)
from .grid import DIRICHLET_PRESSURE, EDGES, NEUMANN_FLUX, NO_FLOW, BoundarySegment, StructuredGrid2D, build_grid
from .nanoparticle_transport import (
    NanoparticleParams,
    NanoState,
    assemble_concentration_system,
    boundary_particle_rates,
    settle_transport,
    solve_concentration,
    update_v1,
    update_v2,
)
from .petrophysics import (
    POROSITY_FLOOR,
    RockFluidParams,
    flow_efficiency,
    update_permeability,
    update_porosity,
)
from .reports import MassBalanceLedger, StepReport
from .sparse_linear import LinearSolveControls

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
SECONDS_PER_YEAR = 365.0 * SECONDS_PER_DAY
MILLIDARCY = perm_fields.MILLIDARCY

COMPLETED = "completed"
FAILED = "failed"

SCENARIOS = ("regular_heterogeneous", "random", "uniform", "from_file")


@dataclass(frozen=True)
class PermeabilityScenario:
    """Сценарий начальной проницаемости; значения в м²."""

    kind: str = "uniform"
    value: float = 100.0 * MILLIDARCY
    layout: str = "checkerboard"
    blocks: tuple[int, ...] = (4, 2)
    values: tuple[float, float] = (50.0 * MILLIDARCY, 500.0 * MILLIDARCY)
    k_min: float = 10.0 * MILLIDARCY
    k_max: float = 1000.0 * MILLIDARCY
    seed: int = 0
    path: str | None = None
    file_scale: float = MILLIDARCY

    def build(self, nx: int, ny: int) -> np.ndarray:
        if self.kind == "uniform":
            return perm_fields.uniform_field(nx, ny, self.value)
        if self.kind == "regular_heterogeneous":
            return perm_fields.regular_heterogeneous_field(nx, ny, self.layout, self.blocks, self.values)
        if self.kind == "random":
            return perm_fields.random_field(nx, ny, self.k_min, self.k_max, self.seed)
        if self.kind == "from_file":
            if not self.path:
                raise ConfigurationError("Для сценария from_file нужен путь к файлу", key_path="permeability.path")
            return perm_fields.field_from_file(self.path, nx, ny) * self.file_scale
        raise ConfigurationError(
            f"Неизвестный сценарий '{self.kind}', допустимы: {', '.join(SCENARIOS)}",
            key_path="permeability.scenario",
        )


def pv_rate_to_flux(rate_pv_per_year: float, pore_volume: float, injection_edge_area: float) -> float:
    """q^N = rate·PV/(год·длина кромки закачки), м/с."""
    return rate_pv_per_year * pore_volume / (SECONDS_PER_YEAR * injection_edge_area)


def steps_to_reach(target_pvi: float, pvi_per_step: float) -> int:
    if target_pvi <= 0:
        return 0
    return int(math.ceil(target_pvi / pvi_per_step - 1e-9))


@dataclass
class SimulationConfig:
    nx: int = 60
    ny: int = 20
    lx: float = 0.3
    ly: float = 0.2
    rock: RockFluidParams = field(default_factory=RockFluidParams)
    nano: NanoparticleParams = field(default_factory=NanoparticleParams)
    scenario: PermeabilityScenario = field(default_factory=PermeabilityScenario)
    injection_edge: str = "west"
    production_edge: str = "east"
    rate_pv_per_year: float = 0.1
    production_pressure: float = 1e5
    injection_saturation: float | None = None
    initial_saturation: float | None = None
    boundary_segments: tuple[BoundarySegment, ...] | None = None
    dt: float = 0.025 * SECONDS_PER_DAY
    target_pvi: float = 0.5
    end_time: float | None = None
    iteration: IterationControls = field(default_factory=IterationControls)
    linear: LinearSolveControls = field(default_factory=LinearSolveControls)
    snapshot_every_pvi: float | None = 0.05
    transport: bool = True
    run_id: str = "run"

    @property
    def pore_volume(self) -> float:
        return self.rock.phi0 * self.lx * self.ly

    @property
    def pvi_per_step(self) -> float:
        return self.rate_pv_per_year * self.dt / SECONDS_PER_YEAR

    @property
    def initial_water_saturation(self) -> float:
        return self.rock.s_wr if self.initial_saturation is None else self.initial_saturation

    def edge_length(self, edge: str) -> float:
        return self.ly if edge in ("west", "east") else self.lx

    def validate(self) -> None:
        self.rock.validate()
        self.nano.validate()
        self.iteration.validate()
        self.linear.validate()
        problems = []
        if not self.dt > 0:
            problems.append("time.dt_days: dt > 0")
        if self.end_time is None and not self.target_pvi >= 0:
            problems.append("time.target_pvi: target_pvi >= 0")
        if self.boundary_segments is None:
            if not self.rate_pv_per_year > 0:
                problems.append("boundaries.rate_pv_per_year: rate > 0")
            if self.injection_edge not in EDGES or self.production_edge not in EDGES:
                problems.append(f"boundaries.injection_edge: edges in {', '.join(EDGES)}")
            elif self.injection_edge == self.production_edge:
                problems.append("boundaries.production_edge: production edge differs from injection edge")
        lo, hi = self.rock.s_wr, 1.0 - self.rock.s_nr
        if not lo <= self.initial_water_saturation <= hi:
            problems.append(f"initial.saturation: S_w0 in [{lo}, {hi}]")
        if self.snapshot_every_pvi is not None and self.snapshot_every_pvi < 0:
            problems.append("output.snapshot_every_pvi: snapshot_every_pvi >= 0")
        if problems:
            raise ConfigurationError(
                "Некорректная конфигурация: " + "; ".join(problems),
                key_path=problems[0].split(":")[0],
                problems=problems,
            )

    def boundary_layout(self) -> list[BoundarySegment]:
        """Закачка через одну сторону, отбор при постоянном давлении через другую, остальное непроницаемо."""
        if self.boundary_segments is not None:
            return list(self.boundary_segments)
        flux = pv_rate_to_flux(self.rate_pv_per_year, self.pore_volume, self.edge_length(self.injection_edge))
        saturation = self.rock.injection_saturation if self.injection_saturation is None else self.injection_saturation
        segments = []
        for edge in EDGES:
            if edge == self.injection_edge:
                segments.append(
                    BoundarySegment(edge, NEUMANN_FLUX, flux=flux, saturation=saturation, concentration=self.nano.c0)
                )
            elif edge == self.production_edge:
                segments.append(BoundarySegment(edge, DIRICHLET_PRESSURE, pressure=self.production_pressure))
            else:
                segments.append(BoundarySegment(edge, NO_FLOW))
        return segments

    def build_grid(self) -> StructuredGrid2D:
        return build_grid(self.nx, self.ny, self.lx, self.ly, self.boundary_layout())

    def steps_total(self) -> int:
        if self.end_time is not None:
            return int(math.ceil(self.end_time / self.dt - 1e-9))
        return steps_to_reach(self.target_pvi, self.pvi_per_step)

    def snapshot_interval(self) -> int | None:
        if not self.snapshot_every_pvi:
            return None
        return max(1, int(round(self.snapshot_every_pvi / self.pvi_per_step)))


@dataclass
class SimulationState:
    step: int
    time: float
    saturation: np.ndarray
    potential: np.ndarray
    nano: NanoState
    porosity: np.ndarray
    permeability: np.ndarray
    initial_permeability: np.ndarray
    total_flux: np.ndarray
    water_flux: np.ndarray
    water_speed: np.ndarray

    def copy(self) -> "SimulationState":
        return SimulationState(
            step=self.step,
            time=self.time,
            saturation=self.saturation.copy(),
            potential=self.potential.copy(),
            nano=self.nano.copy(),
            porosity=self.porosity.copy(),
            permeability=self.permeability.copy(),
            initial_permeability=self.initial_permeability,
            total_flux=self.total_flux.copy(),
            water_flux=self.water_flux.copy(),
            water_speed=self.water_speed.copy(),
        )

    def water_pressure(self, grid: StructuredGrid2D, params: RockFluidParams) -> np.ndarray:
        """p_w = Φ_w − ρ_w·h."""
        return self.potential - params.rho_w * elevation(grid.cell_centers, params.gravity)

    def water_in_place(self, grid: StructuredGrid2D) -> float:
        return float(np.sum(self.porosity * self.saturation) * grid.cell_area)


def apply_initial_conditions(config: SimulationConfig, grid: StructuredGrid2D | None = None) -> SimulationState:
    """S_w = S_w0, C = v1 = v2 = 0, φ = φ0, K = поле сценария, Φ_w = p^D."""
    grid = grid or config.build_grid()
    n = grid.n_cells
    k0 = np.asarray(config.scenario.build(grid.nx, grid.ny), dtype=float)
    replace(config.rock, k0=k0).validate()
    return SimulationState(
        step=0,
        time=0.0,
        saturation=np.full(n, config.initial_water_saturation),
        potential=np.full(n, float(config.production_pressure)),
        nano=NanoState.empty(n),
        porosity=np.full(n, config.rock.phi0),
        permeability=k0.copy(),
        initial_permeability=k0,
        total_flux=np.zeros(grid.n_faces),
        water_flux=np.zeros(grid.n_faces),
        water_speed=np.zeros(n),
    )


def advance_time_step(
    state: SimulationState, grid: StructuredGrid2D, config: SimulationConfig, ledger: MassBalanceLedger
) -> tuple[SimulationState, StepReport]:
    """Выполняет шаг n → n+1; ledger дополняется только при успехе.

    При несходимости внешних итераций бросает ConvergenceError с отчётом,
    ошибка линейного решателя пробрасывается с тем же отчётом.
    """
    rock, nano, controls = config.rock, config.nano, config.iteration
    dt = config.dt
    step = state.step + 1
    report = StepReport(step=step, time_s=step * dt, pvi=step * config.pvi_per_step)

    sat_n = state.saturation
    nano_n = state.nano
    sat_k = sat_n.copy()
    pot_k = state.potential.copy()
    phi_k, perm_k = state.porosity, state.permeability
    conc_k, v1_k, v2_k = nano_n.concentration, nano_n.v1, nano_n.v2
    delta_prev = RELAXATION_SEED

    try:
        for k in range(controls.max_iterations):
            assembly = assemble_pressure_system(grid, sat_k, pot_k, sat_n, phi_k, perm_k, rock, controls, dt)
            pot_new, pressure_report = solve_pressure(assembly, pot_k, config.linear)
            flow = compute_fluxes_and_velocities(grid, assembly, pot_new, sat_k)
            update = explicit_saturation_update(grid, sat_n, phi_k, flow.water_flux, dt, rock)

            delta_curr = float(np.linalg.norm(update.saturation - sat_k))
            theta = compute_relaxation_factor(delta_prev, delta_curr, controls)
            sat_relaxed = relax_saturation(sat_k, update.saturation, theta)
            change = float(np.linalg.norm(sat_relaxed - sat_k))

            report.iterations = k + 1
            report.thetas.append(theta)
            report.deltas.append(change)
            report.pressure_solver_iterations.append(pressure_report.iterations)
            report.saturation_clamps = update.clamped_cells

            phi_used = phi_k
            if config.transport:
                system = assemble_concentration_system(
                    grid, phi_k, update.saturation, sat_n, nano_n.concentration, conc_k,
                    flow.water_flux, flow.water_speed, v1_k, nano, dt,
                )
                conc = solve_concentration(system, conc_k, config.linear)
                v1_new = update_v1(nano_n.v1, flow.water_speed, conc.concentration, nano, dt)
                v2_new = update_v2(nano_n.v2, flow.water_speed, conc.concentration, nano, dt)
                phi_new = update_porosity(rock.phi0, v1_new, v2_new)
                perm_new = update_permeability(
                    state.initial_permeability, phi_new, rock.phi0,
                    flow_efficiency(v2_new, rock.gamma_f), rock.k_f, rock.l,
                )
                conc_change = float(np.linalg.norm(conc.concentration - conc_k))
                report.concentration_solver_iterations.append(conc.report.iterations)
                report.concentration_clamps = conc.clamped_cells
            else:
                conc = None
                v1_new, v2_new, phi_new, perm_new = v1_k, v2_k, phi_k, perm_k
                conc_change = 0.0

            logger.debug("Шаг %d, итерация %d: |dS| = %.3e, theta = %.3f", step, k + 1, change, theta)
            converged = change < controls.tolerance and (
                controls.concentration_tolerance is None or conc_change < controls.concentration_tolerance
            )

            delta_prev = change
            sat_k, pot_k = sat_relaxed, pot_new
            if conc is not None:
                conc_k = conc.concentration
            v1_k, v2_k, phi_k, perm_k = v1_new, v2_new, phi_new, perm_new
            if converged:
                break
        else:
            report.final_delta = report.deltas[-1] if report.deltas else float("nan")
            report.warnings.append(f"внешние итерации не сошлись за {controls.max_iterations}")
            logger.error(
                "Шаг %d прерван: |dS| = %.3e после %d итераций", step, report.final_delta, controls.max_iterations
            )
            raise ConvergenceError(
                f"Шаг {step}: внешние итерации не сошлись за {controls.max_iterations} "
                f"(|dS| = {report.final_delta:.3e} >= {controls.tolerance:.3e})",
                report=report,
            )

        if config.transport:
            settled = settle_transport(
                grid, phi_used, update.saturation, sat_n, nano_n, conc_k,
                flow.water_flux, flow.water_speed, nano, dt, config.linear,
            )
            conc, loss = settled.concentration, settled.loss
            conc_k, v1_k, v2_k = conc.concentration, settled.v1, settled.v2
            phi_k = update_porosity(rock.phi0, v1_k, v2_k)
            perm_k = update_permeability(
                state.initial_permeability, phi_k, rock.phi0,
                flow_efficiency(v2_k, rock.gamma_f), rock.k_f, rock.l,
            )
            report.transport_sweeps = settled.sweeps
            report.concentration_solver_iterations.extend(settled.solver_iterations)
            report.concentration_clamps = conc.clamped_cells
    except LinearSolverError as exc:
        exc.report = report
        report.warnings.append(str(exc))
        logger.error("Шаг %d прерван: %s", step, exc)
        raise

    report.final_delta = report.deltas[-1]
    report.converged = True

    area = grid.cell_area
    new_nano = NanoState(conc_k.copy(), v1_k.copy(), v2_k.copy()) if config.transport else nano_n.copy()
    new_state = SimulationState(
        step=step,
        time=step * dt,
        saturation=update.saturation,
        potential=pot_new,
        nano=new_nano,
        porosity=phi_k,
        permeability=perm_k,
        initial_permeability=state.initial_permeability,
        total_flux=flow.total_flux,
        water_flux=flow.water_flux,
        water_speed=flow.water_speed,
    )

    b_water = flow.water_flux[grid.boundary_slice]
    ledger.water_in_place += float(np.sum(phi_used * (update.saturation - sat_n)) * area)
    ledger.water_clamp_adjustment += float(np.sum(phi_used * (update.saturation - update.unclamped)) * area)
    ledger.water_injected += dt * float(np.sum(np.maximum(-b_water, 0.0)))
    ledger.water_produced += dt * float(np.sum(np.maximum(b_water, 0.0)))

    if config.transport:
        injected_rate, produced_rate = boundary_particle_rates(grid, flow.water_flux, conc.unclamped)
        s_tilde = update.saturation
        ledger.particle_suspended += float(
            np.sum(phi_used * (s_tilde * conc.concentration - sat_n * nano_n.concentration)) * area
        )
        ledger.particle_clamp_adjustment += float(
            np.sum(phi_used * s_tilde * (conc.concentration - conc.unclamped)) * area
        )
        ledger.particle_injected += dt * injected_rate
        ledger.particle_produced += dt * produced_rate
        ledger.particle_deposited = float(np.sum(v1_k) * area)
        ledger.particle_entrapped = float(np.sum(v2_k) * area)
        ledger.particle_iteration_lag += float(
            np.sum((v1_k - nano_n.v1) + (v2_k - nano_n.v2)) * area - dt * np.sum(loss) * area
        )

    raw_porosity = rock.phi0 - (new_state.nano.v1 + new_state.nano.v2)
    report.porosity_floor_hits = int(np.count_nonzero(raw_porosity < POROSITY_FLOOR))
    if report.porosity_floor_hits:
        report.warnings.append(f"пористость ограничена снизу в {report.porosity_floor_hits} ячейках")
    report.min_porosity = float(new_state.porosity.min())
    report.max_porosity_reduction = float((rock.phi0 - new_state.porosity).max())
    report.min_permeability_ratio = float((new_state.permeability / state.initial_permeability).min())
    report.ledger = replace(ledger)
    return new_state, report


@dataclass
class RunResult:
    status: str
    state: SimulationState
    reports: list[StepReport]
    ledger: MassBalanceLedger
    failed_report: StepReport | None = None
    error: str | None = None

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


SnapshotCallback = Callable[[SimulationState, "StepReport | None"], None]
StepCallback = Callable[[SimulationState, StepReport], None]


class Simulation:
    """Владеет состоянием расчёта; шаги выполняются строго последовательно."""

    def __init__(self, config: SimulationConfig):
        config.validate()
        self.config = config
        self.grid = config.build_grid()
        self.state = apply_initial_conditions(config, self.grid)
        self.ledger = MassBalanceLedger.start(self.state.water_in_place(self.grid))
        self.reports: list[StepReport] = []

    def step(self) -> StepReport:
        self.state, report = advance_time_step(self.state, self.grid, self.config, self.ledger)
        self.reports.append(report)
        return report

    def run(
        self,
        on_snapshot: SnapshotCallback | None = None,
        on_step: StepCallback | None = None,
        progress: bool = False,
    ) -> RunResult:
        """Шаги до целевого PVI (или времени) со снимками: начальный, каждые N шагов и конечный."""
        total = self.config.steps_total()
        interval = self.config.snapshot_interval()
        logger.info(
            "Расчёт %s: %d шагов по %.4g с, сетка %dx%d",
            self.config.run_id, total, self.config.dt, self.grid.nx, self.grid.ny,
        )
        if on_snapshot is not None:
            on_snapshot(self.state, None)

        last_snapshot = self.state.step
        with logging_redirect_tqdm():
            for _ in tqdm.trange(total, desc=self.config.run_id, disable=not progress, leave=False):
                try:
                    report = self.step()
                except (ConvergenceError, LinearSolverError) as exc:
                    return RunResult(FAILED, self.state, self.reports, self.ledger, failed_report=exc.report, error=str(exc))
                if on_step is not None:
                    on_step(self.state, report)
                if on_snapshot is not None and interval and self.state.step % interval == 0:
                    on_snapshot(self.state, report)
                    last_snapshot = self.state.step

        if on_snapshot is not None and last_snapshot != self.state.step:
            on_snapshot(self.state, self.reports[-1] if self.reports else None)
        logger.info("Расчёт %s завершён: %d шагов, PVI = %.4f", self.config.run_id, self.state.step,
                    self.state.step * self.config.pvi_per_step)
        return RunResult(COMPLETED, self.state, self.reports, self.ledger)


def run(config: SimulationConfig, **kwargs) -> RunResult:
    return Simulation(config).run(**kwargs)
