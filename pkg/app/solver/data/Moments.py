import math
from enum import unique, Enum
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, NonNegativeInt, model_validator
from scipy.linalg import hankel as scipy_hankel


@unique
class PsdVerdict(str, Enum):  # str as base enables plain JSON strings
    PositiveDefinite = "PositiveDefinite"
    PositiveSemidefinite = "PositiveSemidefinite"
    Indefinite = "Indefinite"


@unique
class Feasibility(str, Enum):
    Feasible = "Feasible"
    Infeasible = "Infeasible"


class MomentSequence(BaseModel):
    """
    finite prefix (s_0, ..., s_k) of real moments, stored raw (uncentered)
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    values: tuple[float, ...]

    @property
    def k(self) -> int:
        """order, index of the last moment"""
        return len(self.values) - 1

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.values, dtype=float)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.values[0] - 1.0) <= tol

    def __str__(self):
        return "(" + ", ".join(f"{v:g}" for v in self.values) + ")"

    @model_validator(mode='after')
    def assert_valid(self) -> 'MomentSequence':
        if len(self.values) <= 0:
            raise ValueError("moment sequence is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("moment sequence has non-finite entries")
        return self


class HankelMatrix(BaseModel):
    """
    (n+1)x(n+1) matrix with entry(i, j) = s_{i+j}; kept as its 2n+1 generating values,
    so symmetry and the constant anti-diagonals hold by construction
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    order: NonNegativeInt
    generators: tuple[float, ...]

    def as_array(self) -> NDArray[np.float64]:
        g = np.asarray(self.generators, dtype=float)
        return scipy_hankel(g[:self.order + 1], g[self.order:])

    def max_abs_entry(self) -> float:
        return float(np.max(np.abs(self.generators)))

    @model_validator(mode='after')
    def assert_valid(self) -> 'HankelMatrix':
        if len(self.generators) != 2 * self.order + 1:
            raise ValueError("hankel matrix needs exactly 2n+1 generating values")
        if not all(math.isfinite(v) for v in self.generators):
            raise ValueError("hankel matrix has non-finite entries")
        return self


class FeasibilityResult(BaseModel):
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    verdict: Feasibility
    # extension values (s~_{k+1}, ...) making the next Hankel matrix PSD, only when Feasible
    witness: Optional[tuple[float, ...]] = None

    @model_validator(mode='after')
    def assert_valid(self) -> 'FeasibilityResult':
        if self.verdict == Feasibility.Feasible and self.witness is None:
            raise ValueError("feasible verdict needs a witness extension")
        if self.verdict == Feasibility.Infeasible and self.witness is not None:
            raise ValueError("infeasible verdict can't carry a witness")
        return self
