import math
from typing import Sequence

import numpy as np
from more_itertools import pairwise

from app.solver.errors import DomainError


def to_bits(nats: float) -> float:
    return nats / math.log(2)


def to_nats(bits: float) -> float:
    return bits * math.log(2)


def default_support_size(h: float) -> int:
    """2 * ceil(h / ln 2) + 1 atoms for a budget of h nats"""
    return 2 * math.ceil(h / math.log(2)) + 1


def geometric_grid(low: float, high: float, points: int) -> tuple[float, ...]:
    if not 0 < low < high:
        raise DomainError(f"geometric grid needs 0 < low < high, got {low}, {high}")
    if points < 2:
        raise DomainError("geometric grid needs at least two points")
    return tuple(float(v) for v in np.geomspace(low, high, points))


def log_panels(upper: float, smallest: float = 1e-6) -> list[tuple[float, float]]:
    """
    [0, upper] split into panels that grow geometrically, first panel [0, smallest * upper]
    """
    if upper <= 0:
        return []
    edges = [0.0, *np.geomspace(smallest * upper, upper, int(math.log10(1 / smallest)) * 2 + 1)]
    return list(pairwise(edges))


def find_best_restart(values: Sequence[float]) -> int:
    """Index of the largest value, ties resolved to the lowest index."""
    if len(values) <= 0:
        raise ValueError("no restart to search")

    # max keeps the first of equal elements
    return max(range(len(values)), key=lambda i: values[i])
