import math
from enum import unique, Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, NonNegativeInt, PositiveFloat, PositiveInt, model_validator

from app.solver.data.Distribution import AtomicDistribution


@unique
class ScalingMode(str, Enum):  # str as base enables plain JSON strings
    baseline = "baseline"
    optimized = "optimized"
    fixed = "fixed"


class RestartDiagnostics(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    index: NonNegativeInt
    # warm start name, "random" for seeded restarts
    origin: str
    # penalised objective at the end of the ascent, None for unoptimized warm starts
    objective: Optional[float] = None
    mutual_information_nats: float
    entropy_residual: float
    mean_residual: float
    power_residual: float
    iterations: NonNegativeInt
    boundary_reached: bool


class CapacityEstimate(BaseModel):
    """
    lower bound on the entropy-constrained capacity, achieved by best_input
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    lower_bound_nats: float
    best_input: AtomicDistribution
    h: PositiveFloat
    snr: PositiveFloat
    restarts: tuple[RestartDiagnostics, ...] = ()
    # no candidate reached H(X) = h within tolerance
    best_effort: bool = False
    time_us: Optional[PositiveInt] = None

    def rows(self) -> list[dict[str, float]]:
        return [{"h_nats": self.h, "snr": self.snr, "lower_bound_nats": self.lower_bound_nats}]

    def __eq__(self, other):
        return (
                self.lower_bound_nats == other.lower_bound_nats
                and self.best_input == other.best_input
                and self.h == other.h
                and self.snr == other.snr
                and self.restarts == other.restarts
                and self.best_effort == other.best_effort
        )

    def exactly(self, other):
        return self == other and self.time_us == other.time_us

    @model_validator(mode='after')
    def assert_valid(self) -> 'CapacityEstimate':
        if self.lower_bound_nats < 0:
            raise ValueError("mutual information can't be negative")
        return self


class SanityReport(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    passed: bool
    # positive values are violations
    entropy_bound_residual: float
    capacity_bound_residual: float
    input_entropy_residual: float
    mean_residual: float
    power_residual: float
    information_residual: float
    tolerance: float

    def rows(self) -> list[dict[str, float | bool]]:
        return [self.model_dump()]


class ScalingPoint(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    snr: PositiveFloat
    gap_nats: float
    # below the numeric floor, not part of the fit
    excluded: bool = False

    def row(self) -> dict[str, float]:
        log_gap = math.log(self.gap_nats) if self.gap_nats > 0 else float("nan")
        return {"snr": self.snr, "gap_nats": self.gap_nats, "log_snr": math.log(self.snr), "log_gap": log_gap}


class ScalingReport(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    h: PositiveFloat
    mode: ScalingMode
    slope: float
    intercept: float
    points: tuple[ScalingPoint, ...]

    def rows(self) -> list[dict[str, float]]:
        return [p.row() for p in self.points if not p.excluded]

    @model_validator(mode='after')
    def assert_valid(self) -> 'ScalingReport':
        if sum(1 for p in self.points if not p.excluded) < 2:
            raise ValueError("slope fit needs at least two points above the gap floor")
        return self
