import math

import pytest

from app.solver.errors import DomainError
from app.solver.utils import (
    to_bits,
    to_nats,
    default_support_size,
    geometric_grid,
    log_panels,
    find_best_restart,
)


def test_units():
    assert to_bits(math.log(2)) == pytest.approx(1)
    assert to_nats(1) == pytest.approx(math.log(2))
    assert to_bits(to_nats(0.37)) == pytest.approx(0.37)


@pytest.mark.parametrize("h, expected", [
    (math.log(2), 3),
    (to_nats(1.5), 5),
    (to_nats(0.01), 3),
    (to_nats(3.0), 7),
])
def test_default_support_size(h, expected):
    assert default_support_size(h) == expected


def test_geometric_grid():
    grid = geometric_grid(1e-3, 1e-1, 3)

    assert grid == pytest.approx((1e-3, 1e-2, 1e-1))
    assert all(isinstance(v, float) for v in grid)


@pytest.mark.parametrize("low, high, points", [(0, 1, 3), (1, 1, 3), (2, 1, 3), (1e-3, 1e-1, 1)])
def test_geometric_grid_invalid(low, high, points):
    with pytest.raises(DomainError):
        geometric_grid(low, high, points)


def test_log_panels():
    panels = log_panels(10.0)

    assert panels[0] == (0.0, pytest.approx(1e-5))
    assert panels[-1][1] == pytest.approx(10.0)
    # contiguous, growing
    for (_, b), (c, _) in zip(panels, panels[1:]):
        assert b == c
    assert all(b > a for a, b in panels)


def test_log_panels_empty():
    assert log_panels(0.0) == []
    assert log_panels(-1.0) == []


def test_find_best_restart():
    assert find_best_restart([0.1, 0.3, 0.2]) == 1
    assert find_best_restart([0.5]) == 0
    # ties go to the first
    assert find_best_restart([0.2, 0.4, 0.4]) == 1


def test_find_best_restart_empty():
    with pytest.raises(ValueError):
        find_best_restart([])
