import math
from enum import unique, Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, PositiveFloat, model_validator
from scipy.special import factorial, factorial2

from app.settings import solverSettings
from app.solver.data.Distribution import AtomicDistribution
from app.solver.data.Moments import MomentSequence
from app.solver.moment_core import center_moments


def collides(x0: float, tail: AtomicDistribution) -> bool:
    threshold = solverSettings.atom_merge_rel_tol * (1 + max(abs(x0), *(abs(a) for a in tail.atoms)))
    return any(abs(a - x0) <= threshold for a in tail.atoms)


class Decomposition(BaseModel):
    """
    X = U x0 + (1-U) X~ with Pr{U = 0} = eps; x0 is not an atom of the tail X~
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    x0: float
    eps: float
    tail: AtomicDistribution

    def __str__(self):
        return f"x0={self.x0:g}, eps={self.eps:g}, tail={self.tail}"

    @model_validator(mode='after')
    def assert_valid(self) -> 'Decomposition':
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 1/2), got {self.eps}")
        if collides(self.x0, self.tail):
            raise ValueError(f"x0={self.x0} collides with a tail atom")
        return self


class TargetMoments(BaseModel):
    """
    moments (m_1, m_2, ...) of a continuous target W
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    m: tuple[float, ...]
    symmetric: bool = False

    @classmethod
    def gaussian(cls, order: int = 8) -> 'TargetMoments':
        # E[Z^n] = (n-1)!! for even n
        return cls(m=tuple(float(factorial2(n - 1, exact=True)) if n % 2 == 0 else 0.0
                           for n in range(1, order + 1)), symmetric=True)

    @classmethod
    def uniform(cls, order: int = 8) -> 'TargetMoments':
        """uniform on [-sqrt(3), sqrt(3)], unit variance"""
        a = math.sqrt(3)
        return cls(m=tuple(a ** n / (n + 1) if n % 2 == 0 else 0.0 for n in range(1, order + 1)), symmetric=True)

    @classmethod
    def laplace(cls, order: int = 8) -> 'TargetMoments':
        """unit variance Laplace, scale b = 1/sqrt(2)"""
        b = 1 / math.sqrt(2)
        return cls(m=tuple(float(factorial(n, exact=True)) * b ** n if n % 2 == 0 else 0.0
                           for n in range(1, order + 1)), symmetric=True)

    @classmethod
    def exponential(cls, order: int = 8) -> 'TargetMoments':
        """rate 1, uncentered: E[W^n] = n!"""
        return cls(m=tuple(float(factorial(n, exact=True)) for n in range(1, order + 1)))

    @property
    def order(self) -> int:
        return len(self.m)

    def moment(self, n: int) -> float:
        if n == 0:
            return 1.0
        return self.m[n - 1]

    def sequence(self) -> MomentSequence:
        return MomentSequence(values=(1.0, *self.m))

    def centered(self) -> 'TargetMoments':
        return TargetMoments(m=center_moments(self.sequence()).values[1:], symmetric=self.symmetric)

    def is_centered(self, tol: float = 1e-12) -> bool:
        return abs(self.m[0]) <= tol * (1 + abs(self.m[1]) ** 0.5)

    @model_validator(mode='after')
    def assert_valid(self) -> 'TargetMoments':
        if len(self.m) < 2:
            raise ValueError("target needs at least m_1 and m_2")
        if not all(math.isfinite(v) for v in self.m):
            raise ValueError("target has non-finite moments")
        if self.m[1] - self.m[0] ** 2 <= 0:
            raise ValueError("target has no positive variance")
        if self.symmetric:
            scale = 1 + max(abs(v) for v in self.m)
            if any(abs(v) > 1e-12 * scale for v in self.m[0::2]):
                raise ValueError("symmetric target has non-zero odd moments")
        if len(self.m) >= 4 and not self.m[3] > self.m[1] ** 2:
            raise ValueError("target needs m_4 > m_2^2")
        return self


@unique
class EtaMethod(str, Enum):
    ClosedFormSymmetric = "ClosedFormSymmetric"
    NumericalGeneral = "NumericalGeneral"


class EtaResult(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    eta: float
    entropy_threshold_bits: float
    method: EtaMethod

    @property
    def entropy_threshold_nats(self) -> float:
        return self.entropy_threshold_bits * math.log(2)

    @model_validator(mode='after')
    def assert_valid(self) -> 'EtaResult':
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must lie in (0, 1/2), got {self.eta}")
        return self


class CertificateGrid(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    eps_points: PositiveInt = Field(default_factory=lambda: solverSettings.certificate_eps_points)
    x0_points: PositiveInt = Field(default_factory=lambda: solverSettings.certificate_x0_points)
    # x0 range is extended this much beyond the det1 boundary
    margin: PositiveFloat = Field(default_factory=lambda: solverSettings.certificate_margin)


class CertificateReport(BaseModel):
    """
    outcome of the four-moment sweep; valid means no X with H(X) <= h matches m_1..m_4
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    valid: bool
    max_min_det: float
    h_nats: float
    eps_max: float
    eta: float
    threshold_bits: float
    grid: CertificateGrid
    tolerance: float

    def rows(self) -> list[dict[str, float | bool]]:
        return [{
            "valid": self.valid, "max_min_det": self.max_min_det, "h_nats": self.h_nats,
            "eps_max": self.eps_max, "eta": self.eta, "threshold_bits": self.threshold_bits,
        }]

    @model_validator(mode='after')
    def assert_valid(self) -> 'CertificateReport':
        if self.valid and not self.max_min_det < -self.tolerance:
            raise ValueError("valid certificate needs a negative max-min determinant")
        if not np.isfinite(self.max_min_det):
            raise ValueError("certificate determinant is not finite")
        return self
