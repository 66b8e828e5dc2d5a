"""
Тесты драйвера расчёта: шаг по времени, баланс, симметрия и эталонные решения.
"""

import os
import sys

import numpy as np
import pytest
from scipy import optimize

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from nanoflow.core.errors import ConfigurationError, ConvergenceError
from nanoflow.core.flow_solver import LAGGED_EXPLICIT, LINEARIZED_COUPLED, IterationControls
from nanoflow.core.grid import DIRICHLET_PRESSURE, NO_FLOW, BoundarySegment
from nanoflow.core.nanoparticle_transport import NanoparticleParams
from nanoflow.core.petrophysics import RockFluidParams
from nanoflow.core.simulation import (
    COMPLETED,
    FAILED,
    MILLIDARCY,
    SECONDS_PER_DAY,
    PermeabilityScenario,
    Simulation,
    SimulationConfig,
    apply_initial_conditions,
    pv_rate_to_flux,
    steps_to_reach,
)
from nanoflow.core.sparse_linear import DENSE_DIRECT, SPARSE_DIRECT, LinearSolveControls

DENSE = LinearSolveControls(method=DENSE_DIRECT)


def _config(nx, ny, **overrides):
    values = dict(nx=nx, ny=ny, snapshot_every_pvi=None, linear=DENSE)
    values.update(overrides)
    return SimulationConfig(**values)


def test_pv_rate_to_flux_and_step_count():
    # 0.1 PV/год через кромку 0.2 м при PV = 0.3·0.3·0.2
    assert pv_rate_to_flux(0.1, 0.018, 0.2) == pytest.approx(2.854e-10, rel=1e-3)
    assert steps_to_reach(0.5, 0.1 * 0.025 / 365.0) == 73000
    assert steps_to_reach(0.0, 1e-3) == 0

    config = SimulationConfig()
    assert config.pvi_per_step == pytest.approx(0.1 * 0.025 / 365.0)
    assert config.steps_total() == 73000
    assert config.snapshot_interval() == 7300
    print("✓ test_pv_rate_to_flux_and_step_count passed")


def test_initial_conditions():
    config = SimulationConfig(scenario=PermeabilityScenario(kind="regular_heterogeneous"))
    state = apply_initial_conditions(config)
    grid = config.build_grid()
    assert state.step == 0 and state.time == 0.0
    assert np.all(state.saturation == config.rock.s_wr)
    assert np.all(state.potential == 1e5)
    assert np.allclose(state.water_pressure(grid, config.rock), 1e5)
    assert not np.any(state.nano.concentration) and not np.any(state.nano.v2)
    assert np.all(state.porosity == 0.3)
    assert set(np.unique(state.permeability / MILLIDARCY).round(6)) == {50.0, 500.0}
    assert state.water_in_place(grid) == pytest.approx(0.3 * 0.001 * 0.3 * 0.2)
    print("✓ test_initial_conditions passed")


def test_invalid_initial_saturation_rejected():
    with pytest.raises(ConfigurationError) as info:
        Simulation(_config(2, 2, initial_saturation=0.9999))
    assert info.value.key_path == "initial.saturation"
    with pytest.raises(ConfigurationError) as info:
        Simulation(_config(2, 2, injection_edge="west", production_edge="west"))
    assert info.value.key_path == "boundaries.production_edge"
    print("✓ test_invalid_initial_saturation_rejected passed")


def test_zero_injection_is_a_fixed_point():
    segments = (
        BoundarySegment("west", NO_FLOW),
        BoundarySegment("east", DIRICHLET_PRESSURE, pressure=1e5),
        BoundarySegment("south", NO_FLOW),
        BoundarySegment("north", NO_FLOW),
    )
    config = _config(4, 3, boundary_segments=segments, initial_saturation=0.3)
    simulation = Simulation(config)
    before = simulation.state.copy()
    report = simulation.step()

    assert report.iterations == 1
    assert report.converged
    after = simulation.state
    assert np.allclose(after.saturation, before.saturation, rtol=0.0, atol=1e-12)
    assert np.allclose(after.potential, before.potential, rtol=1e-12)
    assert not np.any(after.nano.concentration)
    assert np.array_equal(after.porosity, before.porosity)
    print("✓ test_zero_injection_is_a_fixed_point passed")


def test_zero_concentration_matches_pure_two_phase_run():
    common = dict(
        rock=RockFluidParams(b_c=1e4),
        rate_pv_per_year=10.0,
        initial_saturation=0.2,
        scenario=PermeabilityScenario(kind="random", seed=5),
    )
    with_transport = Simulation(_config(6, 3, nano=NanoparticleParams(c0=0.0), transport=True, **common))
    flow_only = Simulation(_config(6, 3, nano=NanoparticleParams(c0=0.0), transport=False, **common))
    k0 = with_transport.state.initial_permeability

    for _ in range(20):
        with_transport.step()
        flow_only.step()
        a, b = with_transport.state, flow_only.state
        assert np.array_equal(a.saturation, b.saturation)
        assert np.array_equal(a.potential, b.potential)
        assert np.all(a.porosity == 0.3)
        assert np.array_equal(a.permeability, k0)
        assert not np.any(a.nano.concentration) and not np.any(a.nano.v1) and not np.any(a.nano.v2)
    print("✓ test_zero_concentration_matches_pure_two_phase_run passed")


def test_mass_balance_is_closed_every_step():
    config = SimulationConfig(
        nx=20,
        ny=10,
        nano=NanoparticleParams(c0=0.01),
        scenario=PermeabilityScenario(kind="regular_heterogeneous"),
        end_time=200 * 0.025 * SECONDS_PER_DAY,
        snapshot_every_pvi=None,
        linear=LinearSolveControls(method=SPARSE_DIRECT),
    )
    residuals = []
    result = Simulation(config).run(
        on_step=lambda state, report: residuals.append(
            (
                report.ledger.relative_water_residual(),
                report.ledger.relative_particle_residual(),
                abs(report.ledger.particle_iteration_lag) / report.ledger.particle_injected,
            )
        )
    )
    assert result.status == COMPLETED
    assert len(residuals) == 200
    for water, particles, lag in residuals:
        assert water <= 1e-8
        assert particles <= 1e-6
        assert lag <= 1e-8
    assert result.ledger.particle_injected > 0
    assert result.state.porosity.max() <= 0.3
    print("✓ test_mass_balance_is_closed_every_step passed")


def test_mirror_symmetry_is_preserved():
    config = _config(
        6,
        4,
        rock=RockFluidParams(b_c=0.5e5),
        nano=NanoparticleParams(c0=0.01),
        rate_pv_per_year=1.0,
        initial_saturation=0.2,
    )
    simulation = Simulation(config)
    mirror = simulation.grid.mirror_cells()

    def check(state, report):
        for values in (state.saturation, state.nano.concentration, state.porosity):
            assert np.allclose(values, values[mirror], rtol=0.0, atol=1e-8)

    for _ in range(500):
        simulation.step()
        if simulation.state.step % 50 == 0:
            check(simulation.state, None)
    assert simulation.state.nano.concentration.max() > 0
    print("✓ test_mirror_symmetry_is_preserved passed")


@pytest.mark.parametrize("seed", range(20))
def test_capillary_modes_reach_same_fixed_point(seed):
    controls = dict(tolerance=1e-12, max_iterations=200)
    common = dict(
        rock=RockFluidParams(b_c=1e4),
        rate_pv_per_year=10.0,
        initial_saturation=0.3,
        scenario=PermeabilityScenario(kind="random", seed=seed),
        transport=False,
    )
    coupled = Simulation(_config(4, 4, iteration=IterationControls(capillary_mode=LINEARIZED_COUPLED, **controls), **common))
    lagged = Simulation(_config(4, 4, iteration=IterationControls(capillary_mode=LAGGED_EXPLICIT, **controls), **common))

    for _ in range(10):
        coupled.step()
        lagged.step()
        a, b = coupled.state, lagged.state
        assert np.linalg.norm(a.saturation - b.saturation) <= 1e-8
        assert np.linalg.norm(a.potential - b.potential) <= 1e-8 * np.linalg.norm(a.potential)
    print(f"✓ test_capillary_modes_reach_same_fixed_point[{seed}] passed")


def _welge_front(params: RockFluidParams):
    """Скачок Баклея-Леверетта по касательной из начала координат к f_w(S)."""
    a = params.mu_w / params.mu_n

    def f(s):
        return s ** 2 / (s ** 2 + a * (1.0 - s) ** 2)

    def df(s):
        return 2.0 * a * s * (1.0 - s) / (s ** 2 + a * (1.0 - s) ** 2) ** 2

    s_front = optimize.brentq(lambda s: df(s) * s - f(s), 0.5, 0.99, xtol=1e-14)
    return s_front, f(s_front) / s_front


def test_buckley_leverett_front():
    rock = RockFluidParams(b_c=0.0)
    config = SimulationConfig(
        nx=200,
        ny=1,
        lx=1.0,
        ly=0.01,
        rock=rock,
        rate_pv_per_year=365.0,
        dt=1e-3 * SECONDS_PER_DAY,
        target_pvi=0.3,
        transport=False,
        snapshot_every_pvi=None,
        linear=LinearSolveControls(method=SPARSE_DIRECT),
    )
    result = Simulation(config).run()
    assert result.completed
    assert result.state.step == 300

    s_front, speed = _welge_front(rock)
    assert s_front == pytest.approx(0.8305, abs=1e-4)
    expected = 0.3 / rock.mobile_span * speed * config.lx

    s = (result.state.saturation - rock.s_wr) / rock.mobile_span
    x = (np.arange(config.nx) + 0.5) * config.lx / config.nx
    half = 0.5 * s_front
    i = int(np.argmax(s < half))
    front = x[i - 1] + (s[i - 1] - half) / (s[i - 1] - s[i]) * (x[i] - x[i - 1])
    assert abs(front - expected) <= config.lx / config.nx
    print("✓ test_buckley_leverett_front passed")


def _face_fluxes(grid, rock, k, s, potential, flux_in, p_out):
    """Потоки воды и нефти по граням, посчитанные заново по зафиксированным S и потенциалу."""
    sn = np.clip((s - rock.s_wr) / rock.mobile_span, 1e-12, 1.0)
    lam_w = rock.k0_rw * sn ** rock.a / rock.mu_w
    lam_n = rock.k0_rn * (1.0 - sn) ** rock.b / rock.mu_n
    p_c = -rock.b_c * np.log(sn)

    water = np.zeros(grid.n_faces)
    oil = np.zeros(grid.n_faces)
    for f in range(grid.n_faces):
        o, nb, area = int(grid.face_owner[f]), int(grid.face_neighbor[f]), grid.face_area[f]
        if nb >= 0:
            t = area * k[o] * k[nb] / (grid.face_owner_distance[f] * k[nb] + grid.face_neighbor_distance[f] * k[o])
            dw = potential[o] - potential[nb]
            dn = dw + p_c[o] - p_c[nb]
            water[f] = t * (lam_w[o] if dw >= 0 else lam_w[nb]) * dw
            oil[f] = t * (lam_n[o] if dn >= 0 else lam_n[nb]) * dn
        elif grid.face_normal[f, 0] < 0:
            water[f] = -flux_in * area
        elif grid.face_normal[f, 0] > 0:
            t = area * k[o] / grid.face_owner_distance[f]
            dw = potential[o] - p_out
            water[f], oil[f] = t * lam_w[o] * dw, t * lam_n[o] * dw
    return water, oil


def _divergence(grid, face_values):
    div = np.zeros(grid.n_cells)
    for f in range(grid.n_faces):
        div[int(grid.face_owner[f])] += face_values[f]
        if grid.face_neighbor[f] >= 0:
            div[int(grid.face_neighbor[f])] -= face_values[f]
    return div


def _transport_residuals(grid, nano, phi, s_n, s, c_n, c, v1_n, v1, v2_n, v2, water, speed, dt):
    """Невязки уравнений концентрации, v1 и v2 в зафиксированном состоянии.

    R берётся при C и v1 конца шага; уравнение концентрации отнесено к φ·A/Δt.
    """
    d = nano.effective_diffusivity
    carried = np.zeros(grid.n_faces)
    for f in range(grid.n_faces):
        o, nb, area = int(grid.face_owner[f]), int(grid.face_neighbor[f]), grid.face_area[f]
        if nb >= 0:
            upwind = c[o] if water[f] >= 0 else c[nb]
            g_o, g_nb = phi[o] * s[o] * d, phi[nb] * s[nb] * d
            t = area * g_o * g_nb / (grid.face_owner_distance[f] * g_nb + grid.face_neighbor_distance[f] * g_o)
            carried[f] = water[f] * upwind + t * (c[o] - c[nb])
        elif water[f] >= 0:
            carried[f] = water[f] * c[o]
        else:
            carried[f] = water[f] * grid.face_inflow_concentration[f]

    excess = np.maximum(speed - nano.u_c, 0.0)
    loss = (nano.gamma_d + nano.gamma_pt) * speed * c - nano.gamma_e * excess * v1
    conc = s * c - s_n * c_n + dt / (phi * grid.cell_area) * (_divergence(grid, carried) + loss * grid.cell_area)
    wall = v1 - v1_n - dt * (nano.gamma_d * speed * c - nano.gamma_e * excess * v1)
    throat = v2 - v2_n - dt * nano.gamma_pt * speed * c
    return conc, wall, throat


def test_committed_states_satisfy_implicit_system():
    tolerance = 1e-10
    nano = NanoparticleParams(c0=0.01, u_c=1e-9)
    config = _config(
        4,
        2,
        rock=RockFluidParams(b_c=1e4),
        nano=nano,
        rate_pv_per_year=10.0,
        initial_saturation=0.3,
        iteration=IterationControls(tolerance=tolerance, max_iterations=300),
    )
    simulation = Simulation(config)
    grid, rock, dt = simulation.grid, config.rock, config.dt
    flux_in = pv_rate_to_flux(config.rate_pv_per_year, config.pore_volume, config.ly)

    for _ in range(3):
        before = simulation.state.copy()
        simulation.step()
        state = simulation.state
        water, oil = _face_fluxes(
            grid, rock, state.permeability, state.saturation, state.potential, flux_in, config.production_pressure
        )
        scale = dt / (state.porosity * grid.cell_area)
        water_residual = state.saturation - before.saturation + scale * _divergence(grid, water)
        total_residual = scale * _divergence(grid, water + oil)
        assert np.linalg.norm(water_residual) <= 10.0 * tolerance
        assert np.linalg.norm(total_residual) <= 10.0 * tolerance

        conc, wall, throat = _transport_residuals(
            grid, nano, state.porosity, before.saturation, state.saturation,
            before.nano.concentration, state.nano.concentration,
            before.nano.v1, state.nano.v1, before.nano.v2, state.nano.v2,
            water, state.water_speed, dt,
        )
        assert np.linalg.norm(conc) <= 10.0 * tolerance * nano.c0
        assert np.all(np.abs(wall) <= 1e-12 * state.nano.v1.max())
        assert np.all(np.abs(throat) <= 1e-12 * state.nano.v2.max())

        assert np.any(state.saturation != before.saturation)
        assert np.any(state.water_speed > nano.u_c)
        assert state.nano.concentration.max() > 0
    print("✓ test_committed_states_satisfy_implicit_system passed")


def test_non_convergence_raises_with_report():
    config = _config(
        4,
        2,
        rock=RockFluidParams(b_c=1e4),
        rate_pv_per_year=10.0,
        initial_saturation=0.3,
        iteration=IterationControls(tolerance=1e-30, max_iterations=1),
    )
    simulation = Simulation(config)
    with pytest.raises(ConvergenceError) as info:
        simulation.step()
    report = info.value.report
    assert report.iterations == 1
    assert not report.converged
    assert report.warnings
    assert simulation.state.step == 0

    result = Simulation(config).run()
    assert result.status == FAILED
    assert result.failed_report.step == 1
    assert result.reports == []
    assert "не сошлись" in result.error
    print("✓ test_non_convergence_raises_with_report passed")


def test_snapshot_schedule():
    base = _config(4, 2, rock=RockFluidParams(b_c=1e4), rate_pv_per_year=10.0, initial_saturation=0.3)
    per_step = base.pvi_per_step
    config = _config(
        4,
        2,
        rock=RockFluidParams(b_c=1e4),
        rate_pv_per_year=10.0,
        initial_saturation=0.3,
        target_pvi=5 * per_step,
        snapshot_every_pvi=2 * per_step,
    )
    steps = []
    result = Simulation(config).run(on_snapshot=lambda state, report: steps.append(state.step))
    assert result.completed
    assert steps == [0, 2, 4, 5]
    assert [r.step for r in result.reports] == [1, 2, 3, 4, 5]
    print("✓ test_snapshot_schedule passed")


def test_zero_target_gives_initial_snapshot_only():
    steps = []
    result = Simulation(_config(3, 2, target_pvi=0.0)).run(on_snapshot=lambda state, report: steps.append(state.step))
    assert result.completed
    assert steps == [0]
    assert result.reports == []
    assert result.ledger.water_residual() == 0.0
    print("✓ test_zero_target_gives_initial_snapshot_only passed")


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["regular_heterogeneous", "random"])
@pytest.mark.parametrize("c0", [0.0, 0.0009, 0.004, 0.01])
def test_full_scale_run_converges(kind, c0):
    config = SimulationConfig(
        nano=NanoparticleParams(c0=c0),
        scenario=PermeabilityScenario(kind=kind, seed=2024),
        target_pvi=0.05,
        snapshot_every_pvi=None,
    )
    previous_v2 = []

    def on_step(state, report):
        assert report.iterations <= 50
        if previous_v2:
            assert np.all(state.nano.v2 >= previous_v2[-1])
            previous_v2[-1] = state.nano.v2.copy()
        else:
            previous_v2.append(state.nano.v2.copy())
        assert np.all(state.porosity <= config.rock.phi0)

    result = Simulation(config).run(on_step=on_step)
    assert result.completed
    assert result.state.step == 7300
    if c0 > 0:
        ratio = result.state.permeability / result.state.initial_permeability
        assert ratio.min() < 1.0
    print(f"✓ test_full_scale_run_converges[{kind}-{c0}] passed")


if __name__ == "__main__":
    test_pv_rate_to_flux_and_step_count()
    test_initial_conditions()
    test_invalid_initial_saturation_rejected()
    test_zero_injection_is_a_fixed_point()
    test_zero_concentration_matches_pure_two_phase_run()
    test_mass_balance_is_closed_every_step()
    test_mirror_symmetry_is_preserved()
    for seed in range(20):
        test_capillary_modes_reach_same_fixed_point(seed)
    test_buckley_leverett_front()
    test_committed_states_satisfy_implicit_system()
    test_non_convergence_raises_with_report()
    test_snapshot_schedule()
    test_zero_target_gives_initial_snapshot_only()
    print("\n✅ Все тесты драйвера расчёта пройдены успешно!")
