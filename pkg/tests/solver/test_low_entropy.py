import math

import numpy as np
import hypothesis as h
import hypothesis.strategies as st
import pytest

from app.solver.atomic_measures import (
    point_mass,
    moments,
    entropy,
    binary_entropy,
    inverse_binary_entropy,
)
from app.solver.data.Decomposition import Decomposition, TargetMoments, EtaMethod, CertificateGrid
from app.solver.data.Distribution import AtomicDistribution
from app.solver.errors import DegenerateError, DomainError, InvariantError, LengthError, PreconditionError
from app.solver.low_entropy import (
    compose,
    decompose,
    entropy_identity_residual,
    induced_moments,
    det_H2_closed_form,
    eta,
    det_sweep,
    four_moment_certificate,
    match_three_moments,
)
from app.solver.moment_core import hankel, leading_minors
from app.solver.utils import to_nats


SQRT3 = math.sqrt(3)


def _mapped(target: TargetMoments, scale: float, shift: float) -> TargetMoments:
    """moments of scale * W + shift"""
    m = (1.0, *target.m)
    return TargetMoments(m=tuple(sum(math.comb(n, i) * scale ** i * m[i] * shift ** (n - i) for i in range(n + 1))
                                 for n in range(1, len(m))))


@st.composite
def decompositions(draw):
    tail_slots = draw(st.lists(st.integers(-6, 6), min_size=1, max_size=5, unique=True))
    weights = draw(st.lists(st.integers(1, 10), min_size=len(tail_slots), max_size=len(tail_slots)))
    # x0 sits between the tail grid points
    x0 = draw(st.integers(-6, 5)) + 0.5
    eps = draw(st.floats(0.01, 0.49))
    total = sum(weights)
    tail = AtomicDistribution(atoms=tuple(0.5 * a for a in tail_slots), weights=tuple(w / total for w in weights))
    return Decomposition(x0=0.5 * x0, eps=eps, tail=tail)


@st.composite
def centered_targets(draw):
    m2 = draw(st.floats(0.5, 2.0))
    m3 = draw(st.floats(-1.0, 1.0))
    excess = draw(st.floats(0.1, 5.0))
    return TargetMoments(m=(0.0, m2, m3, m2 ** 2 * (1 + excess)))


def test_compose():
    tail = AtomicDistribution(atoms=(-SQRT3, SQRT3), weights=(0.5, 0.5))
    dist = compose(Decomposition(x0=0, eps=1 / 3, tail=tail))

    assert dist.atoms == pytest.approx((-SQRT3, 0, SQRT3))
    assert dist.weights == pytest.approx((1 / 6, 2 / 3, 1 / 6))
    assert entropy(dist, base=2) == pytest.approx(binary_entropy(1 / 3, base=2) + 1 / 3, abs=1e-12)
    assert entropy(dist, base=2) == pytest.approx(1.2516, abs=1e-4)


def test_compose_single_atom_tail():
    dist = compose(Decomposition(x0=0, eps=0.2, tail=point_mass(4)))

    assert dist.atoms == (0, 4)
    assert dist.weights == pytest.approx((0.8, 0.2))
    assert entropy(dist) == pytest.approx(binary_entropy(0.2))


def test_compose_collision():
    with pytest.raises(ValueError):
        Decomposition(x0=5, eps=0.25, tail=point_mass(5))
    with pytest.raises(InvariantError):
        compose(Decomposition.model_construct(x0=5.0, eps=0.25, tail=point_mass(5)))


def test_decompose():
    dec = decompose(AtomicDistribution(atoms=(0, 3), weights=(0.9, 0.1)))

    assert dec.x0 == 0
    assert dec.eps == pytest.approx(0.1)
    assert dec.tail.atoms == (3,)


def test_decompose_gh3(gh3):
    dec = decompose(gh3)

    assert dec.x0 == 0
    assert dec.eps == pytest.approx(1 / 3)
    assert dec.tail.atoms == pytest.approx((-SQRT3, SQRT3))
    assert dec.tail.weights == pytest.approx((0.5, 0.5))


def test_decompose_errors(binary):
    with pytest.raises(PreconditionError):
        decompose(binary)
    with pytest.raises(DegenerateError):
        decompose(point_mass(1))


@h.settings(max_examples=200, deadline=None)
@h.given(decompositions())
def test_entropy_identity(dec):
    assert abs(entropy_identity_residual(dec)) <= 1e-12


@h.settings(max_examples=200, deadline=None)
@h.given(decompositions())
def test_decompose_inverts_compose(dec):
    back = decompose(compose(dec))

    assert back.x0 == dec.x0
    assert back.eps == pytest.approx(dec.eps, abs=1e-12)
    assert back.tail.atoms == dec.tail.atoms
    assert back.tail.weights == pytest.approx(dec.tail.weights, abs=1e-12)
    assert compose(back).atoms == compose(dec).atoms


@pytest.mark.parametrize("eps, x0, k, expected", [
    (1 / 3, 0, 4, (1, 0, 3, 0, 9)),
    (0.25, 1, 2, (1, -3, 1)),
])
def test_induced_moments(eps, x0, k, expected):
    seq = induced_moments(TargetMoments.gaussian(4), eps, x0, k)

    assert seq.values == pytest.approx(expected, abs=1e-12)


def test_induced_moments_errors():
    with pytest.raises(DomainError):
        induced_moments(TargetMoments.gaussian(4), 0.5, 0, 2)
    with pytest.raises(DomainError):
        induced_moments(TargetMoments.gaussian(4), 0.0, 0, 2)
    with pytest.raises(LengthError):
        induced_moments(TargetMoments.gaussian(4), 0.25, 0, 6)


@pytest.mark.parametrize("eps, det3", [
    (1 / 3, 0.0),
    (0.2, -50.0),
    (0.4, 3.125),
])
def test_det_H2_closed_form_gaussian(eps, det3):
    det1, value = det_H2_closed_form(TargetMoments.gaussian(4), eps, 0.0)

    assert det1 == pytest.approx(1 / eps)
    assert value == pytest.approx(det3, abs=1e-12)


def test_det_H2_closed_form_uncentered(exponential_target):
    with pytest.raises(PreconditionError):
        det_H2_closed_form(exponential_target, 0.2, 0.0)


@h.settings(max_examples=10000, deadline=None)
@h.given(centered_targets(), st.floats(0.05, 0.45), st.floats(-1.5, 1.5))
def test_det_H2_closed_form_matches_hankel_minors(target, eps, fraction):
    x0 = fraction * math.sqrt(eps / (1 - eps) * target.m[1])
    det1, det3 = det_H2_closed_form(target, eps, x0)
    seq = induced_moments(target, eps, x0, 4)
    minors = leading_minors(hankel(seq, 2))
    scale = (1 + max(abs(v) for v in seq.values)) ** 3

    assert det1 == pytest.approx(minors[1], rel=1e-8, abs=1e-12 * scale)
    assert det3 == pytest.approx(minors[2], rel=1e-8, abs=1e-12 * scale)


@pytest.mark.parametrize("name", ["gaussian", "uniform", "laplace"])
def test_eta_closed_form(name, eta_expected):
    result = eta(getattr(TargetMoments, name)(4))
    expected = eta_expected[name]

    assert result.method == EtaMethod(expected["method"])
    assert result.eta == pytest.approx(expected["eta"], abs=1e-9)
    assert result.entropy_threshold_bits == pytest.approx(expected["entropy_threshold_bits"], abs=1e-9)


@pytest.mark.parametrize("name", ["gaussian", "uniform", "laplace"])
def test_eta_numerical_agrees_with_closed_form(name):
    symmetric = getattr(TargetMoments, name)(4)
    result = eta(TargetMoments(m=symmetric.m))

    assert result.method == EtaMethod.NumericalGeneral
    assert result.eta == pytest.approx(eta(symmetric).eta, abs=1e-5)


def test_eta_skewed(exponential_target):
    result = eta(exponential_target)

    assert result.method == EtaMethod.NumericalGeneral
    assert 0 < result.eta < 0.5
    assert result.entropy_threshold_bits == pytest.approx(binary_entropy(result.eta, base=2), abs=1e-12)
    # shifting the target doesn't move the threshold
    assert eta(exponential_target.centered()).eta == pytest.approx(result.eta, abs=1e-6)


def test_eta_needs_four_moments():
    with pytest.raises(DomainError):
        eta(TargetMoments(m=(0, 1, 0)))


def test_det_sweep_gaussian_below_threshold():
    target = TargetMoments.gaussian(4)
    rows = det_sweep(target, np.linspace(0.01, 1 / 3 - 1e-3, 50), 2048, 1e-9)

    assert len(rows) == 50
    assert set(rows[0]) == {"eps", "x0", "det1", "det3", "min_det"}
    assert all(row["min_det"] < 0 for row in rows)


def test_det_sweep_gaussian_above_threshold():
    rows = det_sweep(TargetMoments.gaussian(4), [0.34, 0.4], 2049, 0.01)

    assert all(row["min_det"] > 0 for row in rows)


def test_det_sweep_domain():
    with pytest.raises(DomainError):
        det_sweep(TargetMoments.gaussian(4), [0.1, 0.5], 16, 0.01)


@pytest.mark.parametrize("h_bits", [0.5, 0.8, 0.9])
def test_four_moment_certificate(h_bits):
    report = four_moment_certificate(TargetMoments.gaussian(4), to_nats(h_bits))

    assert report.valid
    assert report.max_min_det < -1e-6
    assert report.grid == CertificateGrid(eps_points=512, x0_points=2048, margin=0.01)
    assert report.eps_max == pytest.approx(inverse_binary_entropy(h_bits, base=2))
    assert report.eta == pytest.approx(1 / 3)


def test_four_moment_certificate_small_grid():
    report = four_moment_certificate(TargetMoments.laplace(4), to_nats(0.5), CertificateGrid(eps_points=64,
                                                                                            x0_points=128))

    assert report.valid
    assert report.rows()[0]["valid"]


def test_four_moment_certificate_above_threshold():
    with pytest.raises(PreconditionError):
        four_moment_certificate(TargetMoments.gaussian(4), to_nats(1.0))


def test_four_moment_certificate_empty_budget():
    with pytest.raises(DomainError):
        four_moment_certificate(TargetMoments.gaussian(4), 0.0)


@pytest.mark.parametrize("h_bits", [0.05, 0.1, 0.2, 0.4, 0.8, 0.9])
def test_match_three_moments_gaussian(h_bits):
    h = to_nats(h_bits)
    dist = match_three_moments(TargetMoments.gaussian(4), h)
    seq = moments(dist, 4)

    assert dist.n_atoms <= 3
    assert entropy(dist) <= h + 1e-9
    assert seq.values[1:4] == pytest.approx((0, 1, 0), abs=1e-9)
    # below the threshold four moments can't match
    assert abs(seq.values[4] - 3) > 0.1


def test_match_three_moments_eps():
    dist = match_three_moments(TargetMoments.gaussian(4), to_nats(0.4))
    dec = decompose(dist)

    assert dec.x0 == pytest.approx(0, abs=1e-12)
    assert dec.eps == pytest.approx(inverse_binary_entropy(0.2, base=2), rel=1e-9)
    assert binary_entropy(dec.eps, base=2) == pytest.approx(0.2, abs=1e-9)


def test_match_three_moments_skewed():
    dist = match_three_moments(TargetMoments(m=(0, 1, 2, 9)), to_nats(0.3))

    assert dist.n_atoms <= 3
    assert entropy(dist) <= to_nats(0.3) + 1e-9
    assert moments(dist, 3).values[1:] == pytest.approx((0, 1, 2), abs=1e-9)


def test_match_three_moments_uncentered(exponential_target):
    dist = match_three_moments(exponential_target, to_nats(0.3))

    assert moments(dist, 3).values[1:] == pytest.approx((1, 2, 6), rel=1e-9)


def test_match_three_moments_tight():
    h = to_nats(0.4)
    loose = match_three_moments(TargetMoments.gaussian(4), h)
    tight = match_three_moments(TargetMoments.gaussian(4), h, tight=True)

    assert entropy(loose) < entropy(tight) <= h
    assert moments(tight, 3).values[1:] == pytest.approx((0, 1, 0), abs=1e-9)


def test_match_three_moments_equivariant(exponential_target):
    h = to_nats(0.3)
    dist = match_three_moments(exponential_target, h)
    mapped = match_three_moments(_mapped(exponential_target, 2.0, -1.0), h)

    assert mapped.atoms == pytest.approx(tuple(2 * a - 1 for a in dist.atoms), rel=1e-7, abs=1e-7)
    assert entropy(mapped) == pytest.approx(entropy(dist), abs=1e-9)


def test_match_three_moments_errors():
    with pytest.raises(DomainError):
        match_three_moments(TargetMoments.gaussian(4), 0.0)
    with pytest.raises(LengthError):
        match_three_moments(TargetMoments(m=(0, 1)), 0.1)
