import copy

# Ключи, которые документ расчёта обязан задать явно
REQUIRED_KEYS = (
    "grid.nx",
    "grid.ny",
    "grid.lx_m",
    "grid.ly_m",
    "rock_fluid.s_wr",
    "rock_fluid.s_nr",
    "rock_fluid.mu_w_cp",
    "rock_fluid.mu_n_cp",
    "rock_fluid.b_c_bar",
    "rock_fluid.phi0",
    "nanoparticles.c0",
    "permeability.scenario",
    "boundaries.rate_pv_per_year",
    "time.dt_days",
)


class RunSettings:
    """Документ расчёта по умолчанию: пласт 0.3×0.2 м, вытеснение слева направо."""

    def __init__(self):
        self.defaults = {
            "grid": {
                "nx": 60,
                "ny": 20,
                "lx_m": 0.3,
                "ly_m": 0.2,
            },
            "rock_fluid": {
                "s_wr": 0.001,
                "s_nr": 0.001,
                "a": 2.0,
                "b": 2.0,
                "k0_rw": 1.0,
                "k0_rn": 1.0,
                "mu_w_cp": 1.0,
                "mu_n_cp": 0.45,
                "b_c_bar": 50.0,
                "phi0": 0.3,
                "k_f": 0.6,
                "l": 3.0,
                "gamma_f": 0.01,
                "rho_w_kg_m3": 1000.0,
                "rho_n_kg_m3": 800.0,
                "gravity_m_s2": [0.0, 0.0],
            },
            "nanoparticles": {
                "c0": 0.01,
                "gamma_d_per_m": 16.0,
                "gamma_e_per_m": 30.0,
                "gamma_pt_per_m": 1.28,
                "u_c_m_s": 4.6e-6,
                "diffusivity_m2_s": 5.6e-8,  # null -> Стокс-Эйнштейн
                "particle_diameter_nm": 40.0,
                "temperature_k": 293.0,
                "deposit_density_kg_m3": 2330.0,
            },
            "permeability": {
                "scenario": "regular_heterogeneous",  # regular_heterogeneous, random, uniform, from_file
                "value_md": 100.0,
                "layout": "checkerboard",
                "blocks": [4, 2],
                "values_md": [50.0, 500.0],
                "k_min_md": 10.0,
                "k_max_md": 1000.0,
                "seed": 0,
                "path": None,
                "file_units": "md",  # md или m2
            },
            "boundaries": {
                "injection_edge": "west",
                "production_edge": "east",
                "rate_pv_per_year": 0.1,
                "production_pressure_bar": 1.0,
                "injection_saturation": None,  # null -> 1 - S_nr
                "segments": None,
            },
            "initial": {
                "saturation": None,  # null -> S_wr
            },
            "time": {
                "dt_days": 0.025,
                "target_pvi": 0.5,
                "end_time_days": None,
            },
            "iteration": {
                "theta_min": 0.1,
                "theta_max": 0.9,
                "rho": 0.2,
                "tolerance": 1e-4,
                "max_iterations": 50,
                "capillary_mode": "linearized_coupled",
                "concentration_tolerance": None,
            },
            "linear_solver": {
                "method": "iterative_krylov",
                "preconditioner": "auto",
                "rel_tol": 1e-10,
                "abs_tol": 1e-14,
                "max_iterations": None,
            },
            "output": {
                "snapshot_every_pvi": 0.05,
                "write_vtk": True,
                "write_csv": True,
            },
            "run": {
                "run_id": "nanoflow",
                "transport": True,
                "progress": False,
            },
        }
        self.settings = copy.deepcopy(self.defaults)

    def get(self, key, default=None):
        """Значение по пути вида 'section.key'."""
        node = self.settings
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return copy.deepcopy(node)

    def set(self, key, value):
        section, _, name = key.rpartition(".")
        node = self.settings
        for part in filter(None, section.split(".")):
            node = node.setdefault(part, {})
        node[name] = value

    def document(self) -> dict:
        return copy.deepcopy(self.settings)

    def reset_to_defaults(self):
        """Сбрасывает текущие настройки к значениям по умолчанию."""
        self.settings = copy.deepcopy(self.defaults)


settings = RunSettings()
