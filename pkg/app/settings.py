from pydantic import PositiveFloat, PositiveInt, NonNegativeInt
from pydantic_settings import BaseSettings, SettingsConfigDict

# constant; reported by `version`
version = "v0.4.0"


class SolverSettings(BaseSettings):
    # mutated in place by `--config`, so every assignment is validated
    model_config = SettingsConfigDict(validate_assignment=True)

    # moment_core: tol = psd_rel_tol * (1 + max |entry|)
    psd_rel_tol: PositiveFloat = 1e-10
    # atoms closer than this * (1 + max |atom|) are merged
    atom_merge_rel_tol: PositiveFloat = 1e-12
    # user weights may be off by this much, they are renormalised afterwards
    weight_sum_tol: PositiveFloat = 1e-9
    imag_root_tol: PositiveFloat = 1e-8
    bisection_xtol: PositiveFloat = 1e-12

    eta_bisection_tol: PositiveFloat = 1e-6
    eta_eps_scan: PositiveInt = 256
    eta_x0_points: PositiveInt = 2048

    certificate_eps_points: PositiveInt = 512
    certificate_x0_points: PositiveInt = 2048
    certificate_margin: PositiveFloat = 0.01
    certificate_tol: PositiveFloat = 1e-6

    # gaussian_channel quadrature, node_count is doubled until converged
    node_count: PositiveInt = 256
    tail_sigma: PositiveFloat = 8.0
    integration_tol: PositiveFloat = 1e-9
    max_doublings: NonNegativeInt = 5
    clamp_tol: PositiveFloat = 1e-6
    gamma_rel_tol: PositiveFloat = 1e-7
    gamma_max: PositiveFloat = 1e4

    # capacity_opt
    gap_floor: PositiveFloat = 1e-14
    optimizer_node_count: PositiveInt = 64
    sanity_tol: PositiveFloat = 1e-6

    log_level: str = "WARNING"


# defaults can be overwritten via env
solverSettings = SolverSettings()
