"""
Low-entropy random variables: the dominant-atom decomposition X = U x0 + (1-U) X~, the moments X~
inherits from a target, the entropy threshold eta(W) below which four moments can't be matched,
and the constructive three-moment matcher.
"""
import logging
import math
from typing import Iterator, Optional, Sequence

import numpy as np
from more_itertools import first_true
from numpy.polynomial import Polynomial
from scipy import optimize

from app.settings import solverSettings
from app.solver.atomic_measures import (binary_entropy, entropy, inverse_binary_entropy, minimal_extension,
                                        prony_recover)
from app.solver.data.Decomposition import (Decomposition, TargetMoments, EtaResult, EtaMethod, CertificateGrid,
                                           CertificateReport, collides)
from app.solver.data.Distribution import AtomicDistribution
from app.solver.data.Moments import MomentSequence
from app.solver.errors import (DegenerateError, DomainError, InfeasibleError, InvariantError, LengthError,
                               PreconditionError)

logger = logging.getLogger(__name__)

# eps stays this far below 1/2
EPS_MARGIN = 1e-6
# tight mode leaves this share of the budget unused
TIGHT_SLACK = 1e-6
# fallback x0 positions as fractions of the det1 radius, tried after x0 = 0
X0_FRACTIONS = (0.5, -0.5, 0.25, -0.25, 0.125, -0.125, 0.0625, -0.0625)


def compose(dec: Decomposition) -> AtomicDistribution:
    if collides(dec.x0, dec.tail):
        raise InvariantError(f"x0={dec.x0} collides with a tail atom")
    return AtomicDistribution(
        atoms=(dec.x0, *dec.tail.atoms),
        weights=(1 - dec.eps, *(dec.eps * w for w in dec.tail.weights)),
    )


def decompose(x: AtomicDistribution) -> Decomposition:
    if x.n_atoms == 1:
        raise DegenerateError("a single atom has zero entropy and no tail")
    dominant = int(np.argmax(x.weights))
    eps = 1 - x.weights[dominant]
    if eps >= 0.5:
        raise PreconditionError(f"largest mass {x.weights[dominant]:g} is not above 1/2, no dominant atom")

    tail_atoms = x.atoms[:dominant] + x.atoms[dominant + 1:]
    tail_weights = x.weights[:dominant] + x.weights[dominant + 1:]
    total = sum(tail_weights)
    return Decomposition(
        x0=x.atoms[dominant], eps=eps,
        tail=AtomicDistribution(atoms=tail_atoms, weights=tuple(w / total for w in tail_weights)),
    )


def entropy_identity_residual(dec: Decomposition) -> float:
    """H(compose(dec)) - h2(eps) - eps H(tail), in nats"""
    return entropy(compose(dec)) - binary_entropy(dec.eps) - dec.eps * entropy(dec.tail)


def _check_eps(eps: float):
    if not 0 < eps < 0.5:
        raise DomainError(f"eps must lie in (0, 1/2), got {eps}")


def induced_moments(target: TargetMoments, eps: float, x0: float, k: int) -> MomentSequence:
    """s_n = m_n / eps - ((1 - eps) / eps) x0^n, the moments the tail needs"""
    _check_eps(eps)
    if k > target.order:
        raise LengthError(f"target has {target.order} moments, {k} requested")
    return MomentSequence(values=(1.0, *(target.moment(n) / eps - (1 - eps) / eps * x0 ** n
                                         for n in range(1, k + 1))))


def _quartic(target: TargetMoments) -> Polynomial:
    """p(x) = m2 x^4 - 2 m3 x^3 + (m4 - 3 m2^2) x^2 + 2 m2 m3 x"""
    m2, m3, m4 = target.m[1], target.m[2], target.m[3]
    return Polynomial([0.0, 2 * m2 * m3, m4 - 3 * m2 ** 2, -2 * m3, m2])


def _require_centered_four(target: TargetMoments):
    if target.order < 4:
        raise DomainError(f"need moments through order 4, target has {target.order}")
    if not target.is_centered():
        raise PreconditionError("target must be centered, apply center_moments first")


def _det3(target: TargetMoments, eps, p_x0):
    """alpha / eps^2 - beta / eps^3 with alpha = p + m2 m4 - m3^2, beta = p + m2^3"""
    m2, m3, m4 = target.m[1], target.m[2], target.m[3]
    alpha = p_x0 + (m2 * m4 - m3 ** 2)
    beta = p_x0 + m2 ** 3
    return alpha / eps ** 2 - beta / eps ** 3


def _det1(target: TargetMoments, eps, x0):
    return target.m[1] / eps - (1 - eps) / eps ** 2 * x0 ** 2


def det_H2_closed_form(target: TargetMoments, eps: float, x0: float) -> tuple[float, float]:
    _require_centered_four(target)
    _check_eps(eps)
    return float(_det1(target, eps, x0)), float(_det3(target, eps, _quartic(target)(x0)))


def _x0_radius(target: TargetMoments, eps):
    return np.sqrt(eps / (1 - eps) * target.m[1])


def _max_det3(target: TargetMoments, p: Polynomial, eps: float, x0_points: int) -> float:
    """
    max of det3 over x0^2 <= eps m2 / (1 - eps); det3 falls with p(x0), so this minimises the quartic
    on a grid and at the real critical points inside the interval
    """
    r = _x0_radius(target, eps)
    xs = np.linspace(-r, r, x0_points)
    critical = p.deriv().roots()
    critical = critical[np.abs(critical.imag) <= 1e-12].real
    critical = critical[np.abs(critical) <= r]
    p_min = float(min(p(xs).min(), p(critical).min() if critical.size else np.inf))
    return float(_det3(target, eps, p_min))


def _eta_closed_form(m2: float, m4: float) -> float:
    if m4 >= 3 * m2 ** 2:
        return m2 ** 2 / m4
    return (5 * m2 ** 2 - m4) / (9 * m2 ** 2 - m4)


def _eta_numerical(target: TargetMoments) -> float:
    p = _quartic(target)
    upper = 0.5 - EPS_MARGIN
    x0_points = solverSettings.eta_x0_points

    def f(eps):
        return _max_det3(target, p, eps, x0_points)

    grid = np.linspace(0.0, upper, solverSettings.eta_eps_scan + 1)[1:]
    crossing = first_true(range(len(grid)), pred=lambda i: f(grid[i]) >= 0)
    if crossing is None:
        logger.info("det3 stays negative up to eps=%g", upper)
        return upper

    lo = float(grid[crossing - 1]) if crossing > 0 else 0.0
    hi = float(grid[crossing])
    while hi - lo > solverSettings.eta_bisection_tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        logger.debug("eta bracket [%g, %g]", lo, hi)
    if lo <= 0:
        raise DomainError("det3 is non-negative for every eps on the grid, degenerate target")
    return lo


def eta(target: TargetMoments) -> EtaResult:
    if target.order < 4:
        raise DomainError(f"eta needs moments through order 4, target has {target.order}")
    centered = target.centered()
    m2, m4 = centered.m[1], centered.m[3]
    if not m4 > m2 ** 2:
        raise DomainError("degenerate target, m4 <= m2^2")

    if target.symmetric:
        value, method = _eta_closed_form(m2, m4), EtaMethod.ClosedFormSymmetric
    else:
        value, method = _eta_numerical(centered), EtaMethod.NumericalGeneral

    logger.info("eta=%g (%s)", value, method.value)
    return EtaResult(eta=value, entropy_threshold_bits=binary_entropy(value, base=2), method=method)


def det_sweep(target: TargetMoments, eps_values: Sequence[float], x0_points: int,
              margin: float) -> list[dict[str, float]]:
    """
    (det1, det3) over x0 in the det1 radius widened by margin, one row per eps at the x0 maximising
    min(det1, det3)
    """
    _require_centered_four(target)
    eps = np.asarray(eps_values, dtype=float)
    if np.any((eps <= 0) | (eps >= 0.5)):
        raise DomainError("sweep eps values must lie in (0, 1/2)")

    p = _quartic(target)
    unit = np.linspace(-1.0, 1.0, x0_points)
    x0 = np.outer(_x0_radius(target, eps) * (1 + margin), unit)
    e = eps[:, None]
    det1 = _det1(target, e, x0)
    det3 = _det3(target, e, p(x0))
    lowest = np.minimum(det1, det3)
    best = np.argmax(lowest, axis=1)
    rows = np.arange(len(eps))
    return [{"eps": float(eps[i]), "x0": float(x0[i, j]), "det1": float(det1[i, j]), "det3": float(det3[i, j]),
             "min_det": float(lowest[i, j])} for i, j in zip(rows, best)]


def four_moment_certificate(target: TargetMoments, h: float, grid: Optional[CertificateGrid] = None
                            ) -> CertificateReport:
    if grid is None:
        grid = CertificateGrid()
    threshold = eta(target)
    if h >= threshold.entropy_threshold_nats:
        raise PreconditionError(f"h={h:g} nats is not below the threshold "
                                f"{threshold.entropy_threshold_nats:g} nats, certificate inapplicable")
    if h <= 0:
        raise DomainError(f"entropy budget must be positive, got {h}")

    eps_max = inverse_binary_entropy(h)
    eps_values = np.linspace(0.0, eps_max, grid.eps_points + 1)[1:]
    rows = det_sweep(target.centered(), eps_values, grid.x0_points, grid.margin)
    max_min_det = max(row["min_det"] for row in rows)
    tolerance = solverSettings.certificate_tol
    logger.info("certificate at h=%g nats: max min det = %g", h, max_min_det)
    return CertificateReport(
        valid=max_min_det < -tolerance, max_min_det=max_min_det, h_nats=h, eps_max=eps_max,
        eta=threshold.eta, threshold_bits=threshold.entropy_threshold_bits, grid=grid, tolerance=tolerance,
    )


def _budget_eps(h: float, tight: bool) -> float:
    upper = 0.5 - EPS_MARGIN
    if not tight:
        half = h / 2
        if half >= binary_entropy(upper):
            return upper
        return min(inverse_binary_entropy(half), upper)

    # H(X) <= h2(eps) + eps ln 2 for a two-atom tail
    goal = h * (1 - TIGHT_SLACK)

    def excess(e):
        return binary_entropy(e) + e * math.log(2) - goal

    if excess(upper) <= 0:
        return upper
    return float(optimize.brentq(excess, 0.0, upper, xtol=solverSettings.bisection_xtol))


def _x0_candidates(radius: float) -> Iterator[float]:
    yield 0.0
    for fraction in X0_FRACTIONS:
        yield fraction * radius


def match_three_moments(target: TargetMoments, h: float, tight: bool = False) -> AtomicDistribution:
    """
    At most three atoms, H(X) <= h, first three moments equal to the target's.
    A dominant atom x0 carries 1 - eps, the two-atom tail is read off the singular extension of the
    induced moments.
    """
    if not h > 0:
        raise DomainError(f"entropy budget must be positive, got {h}")
    if target.order < 3:
        raise LengthError(f"three-moment matching needs m1..m3, target has {target.order}")

    m1 = target.m[0]
    centered = target.centered()
    eps = _budget_eps(h, tight)
    radius = float(_x0_radius(centered, eps))
    logger.debug("eps=%g, x0 radius=%g", eps, radius)

    def attempt(x0: float) -> Optional[Decomposition]:
        s = induced_moments(centered, eps, x0, 3)
        extended = MomentSequence(values=(*s.values, minimal_extension(s)))
        try:
            tail = prony_recover(extended)
        except InfeasibleError:
            logger.warning("no tail for x0=%g", x0)
            return None
        if collides(x0, tail):
            logger.warning("x0=%g collides with the tail, retrying", x0)
            return None
        return Decomposition(x0=x0, eps=eps, tail=tail)

    dec = first_true((attempt(x0) for x0 in _x0_candidates(radius)), default=None, pred=lambda d: d is not None)
    if dec is None:
        raise InfeasibleError(f"no admissible x0 for h={h:g}")

    matched = compose(dec).affine(1.0, m1)
    logger.info("matched three moments with %d atoms, H=%g nats (budget %g)", matched.n_atoms, entropy(matched), h)
    return matched
