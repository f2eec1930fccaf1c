import math
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from app.settings import solverSettings


class AtomicDistribution(BaseModel):
    """
    finitely supported probability distribution; atoms strictly increasing, weights positive
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    atoms: tuple[float, ...]
    weights: tuple[float, ...]

    @model_validator(mode='before')
    @classmethod
    def normalize(cls, data: Any) -> Any:
        """Sorts atoms, drops zero weights, merges near-duplicate atoms and renormalises."""
        if not isinstance(data, dict) or "atoms" not in data or "weights" not in data:
            return data
        atoms = [float(a) for a in data["atoms"]]
        weights = [float(w) for w in data["weights"]]
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights differ in length")
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ValueError("weights must be finite and non-negative")
        if any(not math.isfinite(a) for a in atoms):
            raise ValueError("atoms must be finite")

        pairs = sorted((a, w) for a, w in zip(atoms, weights) if w > 0)
        if not pairs:
            raise ValueError("distribution has no positive weight")

        threshold = solverSettings.atom_merge_rel_tol * (1 + max(abs(a) for a, _ in pairs))
        merged: list[list[float]] = []
        for a, w in pairs:
            if merged and a - merged[-1][0] <= threshold:
                merged[-1][1] += w
            else:
                merged.append([a, w])

        total = sum(w for _, w in merged)
        if abs(total - 1.0) > solverSettings.weight_sum_tol:
            raise ValueError(f"weights sum to {total}, not 1")
        return {
            "atoms": tuple(a for a, _ in merged),
            "weights": tuple(w / total for _, w in merged),
        }

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def mean(self) -> float:
        a, w = self.arrays()
        return float(w @ a)

    @property
    def second_moment(self) -> float:
        a, w = self.arrays()
        return float(w @ a ** 2)

    @property
    def variance(self) -> float:
        a, w = self.arrays()
        return float(w @ (a - w @ a) ** 2)

    @property
    def max_weight(self) -> float:
        return max(self.weights)

    def arrays(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return np.asarray(self.atoms, dtype=float), np.asarray(self.weights, dtype=float)

    def affine(self, scale: float, shift: float = 0.0) -> 'AtomicDistribution':
        """Distribution of scale * X + shift."""
        if scale == 0:
            raise ValueError("affine map needs a non-zero scale")
        return AtomicDistribution(atoms=tuple(scale * a + shift for a in self.atoms), weights=self.weights)

    def rows(self) -> list[dict[str, float]]:
        """CSV export, columns atom,weight"""
        return [{"atom": a, "weight": w} for a, w in zip(self.atoms, self.weights)]

    def __str__(self):
        return "{" + ", ".join(f"{a:g}: {w:g}" for a, w in zip(self.atoms, self.weights)) + "}"

    @model_validator(mode='after')
    def assert_valid(self) -> 'AtomicDistribution':
        if len(self.atoms) <= 0:
            raise ValueError("distribution has no atoms")
        if any(w <= 0 for w in self.weights):
            raise ValueError("distribution has non-positive weights")
        if any(b <= a for a, b in zip(self.atoms, self.atoms[1:])):
            raise ValueError("atoms are not strictly increasing")
        return self


class QuadratureSpec(BaseModel):
    """
    m-point Gauss-Hermite rule; the target is always the standard normal
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    point_count: PositiveInt
