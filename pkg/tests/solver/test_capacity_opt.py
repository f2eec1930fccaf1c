import math

import pytest

from app.solver.atomic_measures import entropy, gauss_hermite, two_point
from app.solver.capacity_opt import (
    baseline_entropy_limit,
    default_warm_starts,
    estimate_capacity,
    baseline_three_moment,
    gap_scaling_experiment,
    sanity_bounds,
)
from app.solver.data.Channel import ChannelPoint
from app.solver.data.Config import OptimizationConfig
from app.solver.data.Distribution import QuadratureSpec
from app.solver.data.Result import ScalingMode
from app.solver.errors import DomainError, PreconditionError
from app.solver.gaussian_channel import capacity, mutual_information, is_standardized
from app.solver.utils import geometric_grid, to_nats

# few iterations, the warm starts carry most of the quality
QUICK = OptimizationConfig(restarts=1, max_iterations=10, penalty_stages=2)


def test_baseline_entropy_limit():
    assert baseline_entropy_limit() == pytest.approx(to_nats(0.9182958340544896))


def test_default_warm_starts():
    starts = dict(default_warm_starts(to_nats(0.4), 3))

    assert set(starts) == {"baseline", "baseline-tight", "two-point"}
    for dist in starts.values():
        assert is_standardized(dist)
        assert entropy(dist) <= to_nats(0.4) + 1e-9


def test_default_warm_starts_above_baseline_regime():
    starts = dict(default_warm_starts(to_nats(3.0), 16))

    assert "baseline" not in starts
    assert any(name.startswith("gauss-hermite-") for name in starts)


def test_estimate_binary_saturates():
    est = estimate_capacity(math.log(2), 100, OptimizationConfig(support_size=2, restarts=1, max_iterations=10,
                                                                  penalty_stages=2))

    assert est.lower_bound_nats == pytest.approx(math.log(2), abs=1e-3)
    assert est.best_input.n_atoms <= 2


def test_estimate_high_entropy_budget():
    est = estimate_capacity(to_nats(3.0), 1, OptimizationConfig(support_size=16, restarts=1, max_iterations=5,
                                                                 penalty_stages=1))

    assert est.lower_bound_nats == pytest.approx(capacity(1), abs=5e-3)
    assert est.lower_bound_nats <= capacity(1) + 1e-6


def test_estimate_beats_baseline():
    h = to_nats(0.4)
    _, baseline = baseline_three_moment(h, 0.01)
    est = estimate_capacity(h, 0.01, QUICK.model_copy(update={"support_size": 3}))

    assert est.lower_bound_nats >= baseline
    assert sanity_bounds(est).passed


def test_estimate_tiny_budget():
    h = to_nats(0.01)
    est = estimate_capacity(h, 1, QUICK)

    assert est.lower_bound_nats / h >= 0.9


def test_estimate_constraints():
    h = to_nats(0.5)
    est = estimate_capacity(h, 0.5, QUICK)
    dist = est.best_input

    assert entropy(dist) <= h + 1e-6
    assert abs(dist.mean) <= 1e-6
    assert dist.second_moment == pytest.approx(1, abs=1e-6)
    assert est.lower_bound_nats == pytest.approx(mutual_information(ChannelPoint(snr=0.5, input=dist)), abs=1e-9)
    assert est.lower_bound_nats <= min(h, capacity(0.5)) + 1e-6
    assert est.time_us is not None
    assert [d.index for d in est.restarts] == list(range(len(est.restarts)))
    assert any(d.objective is None for d in est.restarts)


def test_estimate_reproducible():
    first = estimate_capacity(to_nats(0.6), 0.3, QUICK)
    second = estimate_capacity(to_nats(0.6), 0.3, QUICK)

    assert first == second
    assert first.restarts == second.restarts


@pytest.mark.parametrize("h_bits", [0.1, 0.4, 0.8, 1.5, 2.5])
@pytest.mark.parametrize("snr", [0.01, 0.1, 0.5, 1, 10])
def test_estimate_grid(h_bits, snr):
    h = to_nats(h_bits)
    est = estimate_capacity(h, snr, OptimizationConfig(restarts=2))
    dist = est.best_input

    assert sanity_bounds(est).passed
    assert entropy(dist) <= h + 1e-6
    assert abs(dist.mean) <= 1e-6
    assert dist.second_moment == pytest.approx(1, abs=1e-6)
    if h < baseline_entropy_limit():
        _, baseline = baseline_three_moment(h, snr)
        assert est.lower_bound_nats >= baseline - 1e-12


def test_estimate_monotone_in_budget():
    low = estimate_capacity(to_nats(0.3), 1, QUICK)
    high = estimate_capacity(to_nats(0.6), 1, QUICK, warm_starts=[("previous", low.best_input)])

    assert high.lower_bound_nats >= low.lower_bound_nats - 1e-6


def test_estimate_unreachable_boundary():
    # two atoms can't reach 1.5 bits
    est = estimate_capacity(to_nats(1.5), 1, QUICK.model_copy(update={"support_size": 2}))

    assert est.best_effort
    assert sanity_bounds(est).passed


@pytest.mark.parametrize("h, snr", [(0, 1), (-1, 1), (0.5, 0)])
def test_estimate_domain(h, snr):
    with pytest.raises(DomainError):
        estimate_capacity(h, snr, QUICK)


def test_baseline_three_moment_gap():
    dist, info = baseline_three_moment(to_nats(0.5), 0.01)

    assert dist.n_atoms <= 3
    assert is_standardized(dist)
    assert 0 <= capacity(0.01) - info < 0.01 * capacity(0.01)


def test_baseline_three_moment_low_snr():
    _, info = baseline_three_moment(to_nats(0.9), 1e-3)

    assert capacity(1e-3) - info < 1e-10


@pytest.mark.parametrize("h_bits", [1.0, 0.0])
def test_baseline_three_moment_domain(h_bits):
    with pytest.raises(DomainError):
        baseline_three_moment(to_nats(h_bits), 0.1)


def test_gap_scaling_baseline():
    report = gap_scaling_experiment(to_nats(0.5), geometric_grid(1e-3, 1e-1, 9))

    assert report.mode == ScalingMode.baseline
    assert 3.7 <= report.slope <= 4.3
    assert len(report.rows()) == 9


def test_gap_scaling_binary(binary):
    report = gap_scaling_experiment(to_nats(0.5), geometric_grid(1e-3, 1e-1, 9), ScalingMode.fixed,
                                    fixed_input=binary)

    assert 3.7 <= report.slope <= 4.3


def test_gap_scaling_two_moments():
    report = gap_scaling_experiment(to_nats(0.5), geometric_grid(1e-3, 1e-1, 9), ScalingMode.fixed,
                                    fixed_input=two_point(0.4))

    assert 2.7 <= report.slope <= 3.3
    assert set(report.rows()[0]) == {"snr", "gap_nats", "log_snr", "log_gap"}


def test_gap_scaling_optimized_below_baseline():
    grid = geometric_grid(1e-2, 1e-1, 2)
    h = to_nats(0.5)
    baseline = gap_scaling_experiment(h, grid)
    optimized = gap_scaling_experiment(h, grid, ScalingMode.optimized, cfg=QUICK)

    for b, o in zip(baseline.points, optimized.points):
        assert o.gap_nats <= b.gap_nats


def test_gap_scaling_errors(binary):
    with pytest.raises(DomainError):
        gap_scaling_experiment(to_nats(0.5), (1e-4, 1e-2))
    with pytest.raises(PreconditionError):
        gap_scaling_experiment(to_nats(0.5), (1e-3, 1e-2), ScalingMode.fixed)
    with pytest.raises(DomainError):
        # eight Gauss-Hermite atoms leave no measurable gap
        gap_scaling_experiment(to_nats(0.5), (1e-3, 2e-3), ScalingMode.fixed,
                               fixed_input=gauss_hermite(QuadratureSpec(point_count=8)))


def test_sanity_bounds_corrupted():
    h = to_nats(0.4)
    est = estimate_capacity(h, 0.01, QUICK)
    corrupted = est.model_copy(update={"lower_bound_nats": h + 0.1})
    report = sanity_bounds(corrupted)

    assert not report.passed
    assert report.entropy_bound_residual == pytest.approx(0.1)


def test_sanity_bounds_low_snr():
    h = to_nats(0.9)
    est = estimate_capacity(h, 1e-3, QUICK)
    report = sanity_bounds(est)

    assert report.passed
    # capacity is the binding bound
    assert report.capacity_bound_residual > report.entropy_bound_residual
