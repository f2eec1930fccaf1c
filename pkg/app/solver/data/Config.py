from typing import Optional

from pydantic import BaseModel, ConfigDict, NonNegativeInt, PositiveFloat, PositiveInt, model_validator


class OptimizationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True, extra='forbid')

    # K, None picks 2 * ceil(h / ln 2) + 1
    support_size: Optional[int] = None
    restarts: PositiveInt = 4
    seed: NonNegativeInt = 0
    # per penalty stage
    max_iterations: PositiveInt = 60

    # penalty continuation on (H(X) - h)^2
    penalty_initial: PositiveFloat = 10.0
    penalty_growth: PositiveFloat = 10.0
    penalty_stages: PositiveInt = 5
    fd_rel_step: PositiveFloat = 1e-5

    constraint_tolerance: PositiveFloat = 1e-6
    entropy_boundary_tolerance: PositiveFloat = 1e-6

    @model_validator(mode='after')
    def assert_valid(self) -> 'OptimizationConfig':
        if self.support_size is not None and self.support_size < 2:
            raise ValueError(f"support size must be at least 2, got {self.support_size}")
        if self.penalty_growth <= 1:
            raise ValueError("penalty has to grow between stages")
        return self
