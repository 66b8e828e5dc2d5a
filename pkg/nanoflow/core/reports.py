"""
Отчёты о шагах по времени и баланс масс.

Все объёмы отнесены к единице толщины (м³/м).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

_TINY = 1e-300


@dataclass
class MassBalanceLedger:
    """Накопленный баланс воды и частиц.

    Запасы в пласте ведутся приращениями за шаг. Поправки от ограничения
    насыщенности и концентрации учитываются отдельными статьями.
    particle_iteration_lag (расхождение Δ(v1 + v2) и Δt·R) только
    отображается и в невязку не входит.
    """

    water_injected: float = 0.0
    water_produced: float = 0.0
    water_in_place_initial: float = 0.0
    water_in_place: float = 0.0
    water_clamp_adjustment: float = 0.0
    particle_injected: float = 0.0
    particle_produced: float = 0.0
    particle_suspended: float = 0.0
    particle_deposited: float = 0.0
    particle_entrapped: float = 0.0
    particle_clamp_adjustment: float = 0.0
    particle_iteration_lag: float = 0.0

    @classmethod
    def start(cls, water_in_place: float) -> "MassBalanceLedger":
        return cls(water_in_place_initial=water_in_place, water_in_place=water_in_place)

    def water_residual(self) -> float:
        return (
            self.water_in_place
            - self.water_in_place_initial
            - self.water_clamp_adjustment
            - self.water_injected
            + self.water_produced
        )

    def relative_water_residual(self) -> float:
        return abs(self.water_residual()) / max(self.water_in_place_initial, self.water_injected, _TINY)

    def particle_residual(self) -> float:
        return (
            self.particle_suspended
            + self.particle_deposited
            + self.particle_entrapped
            + self.particle_produced
            - self.particle_injected
            - self.particle_clamp_adjustment
        )

    def relative_particle_residual(self) -> float:
        if self.particle_injected <= 0.0:
            return abs(self.particle_residual())
        return abs(self.particle_residual()) / self.particle_injected

    def to_dict(self) -> dict:
        data = asdict(self)
        data["water_residual"] = self.water_residual()
        data["particle_residual"] = self.particle_residual()
        return data


@dataclass
class StepReport:
    step: int
    time_s: float
    pvi: float
    iterations: int = 0
    transport_sweeps: int = 0
    final_delta: float = float("nan")
    converged: bool = False
    thetas: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    pressure_solver_iterations: list[int] = field(default_factory=list)
    concentration_solver_iterations: list[int] = field(default_factory=list)
    saturation_clamps: int = 0
    concentration_clamps: int = 0
    porosity_floor_hits: int = 0
    min_porosity: float = float("nan")
    max_porosity_reduction: float = 0.0
    min_permeability_ratio: float = 1.0
    ledger: MassBalanceLedger = field(default_factory=MassBalanceLedger)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ledger"] = self.ledger.to_dict()
        return data

    def to_row(self) -> dict:
        """Плоская строка для таблицы временного ряда."""
        row = {
            "step": self.step,
            "time_s": self.time_s,
            "pvi": self.pvi,
            "iterations": self.iterations,
            "transport_sweeps": self.transport_sweeps,
            "final_delta": self.final_delta,
            "last_theta": self.thetas[-1] if self.thetas else float("nan"),
            "pressure_solver_iterations": sum(self.pressure_solver_iterations),
            "concentration_solver_iterations": sum(self.concentration_solver_iterations),
            "saturation_clamps": self.saturation_clamps,
            "concentration_clamps": self.concentration_clamps,
            "porosity_floor_hits": self.porosity_floor_hits,
            "min_porosity": self.min_porosity,
            "max_porosity_reduction": self.max_porosity_reduction,
            "min_permeability_ratio": self.min_permeability_ratio,
        }
        row.update(self.ledger.to_dict())
        return row


TIMESERIES_COLUMNS = list(
    StepReport(step=0, time_s=0.0, pvi=0.0).to_row().keys()
)
