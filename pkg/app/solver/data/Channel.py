from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from app.settings import solverSettings
from app.solver.data.Distribution import AtomicDistribution


class ChannelPoint(BaseModel):
    """
    Y = sqrt(snr) X + Z, Z standard normal
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    snr: PositiveFloat
    input: AtomicDistribution


class IntegrationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    # Gauss-Hermite nodes per atom for the noise average
    node_count: int = Field(default_factory=lambda: solverSettings.node_count)
    # nodes beyond this many noise standard deviations carry no weight and are dropped
    tail_sigma: float = Field(default_factory=lambda: solverSettings.tail_sigma)
    tolerance: PositiveFloat = Field(default_factory=lambda: solverSettings.integration_tol)

    @model_validator(mode='after')
    def assert_valid(self) -> 'IntegrationSpec':
        if self.node_count < 16:
            raise ValueError(f"node_count must be at least 16, got {self.node_count}")
        if self.tail_sigma < 6:
            raise ValueError(f"tail_sigma must be at least 6, got {self.tail_sigma}")
        return self


class EntropyViaMmse(BaseModel):
    """
    H(X) as half the mmse integral; the part beyond gamma_max is estimated, not integrated
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    integral_nats: float
    tail_nats: float
    gamma_max: PositiveFloat

    @property
    def estimate_nats(self) -> float:
        return self.integral_nats + self.tail_nats

    def rows(self) -> list[dict[str, float]]:
        return [{"integral_nats": self.integral_nats, "tail_nats": self.tail_nats,
                 "estimate_nats": self.estimate_nats, "gamma_max": self.gamma_max}]

    @model_validator(mode='after')
    def assert_valid(self) -> 'EntropyViaMmse':
        if self.tail_nats < 0:
            raise ValueError("tail estimate can't be negative")
        return self
