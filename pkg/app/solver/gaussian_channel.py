"""
Scalar AWGN channel Y = sqrt(snr) X + Z with a finitely supported input X.

Conditioned on X = a_i the output is y = sqrt(snr) a_i + z, and
    ln f_Y(y) / phi(z) = logsumexp_j(ln w_j - z d_ij - d_ij^2 / 2),  d_ij = sqrt(snr) (a_i - a_j).
Mutual information and the posterior mean are evaluated in that relative form, averaged over z with
Gauss-Hermite nodes. Differences of order 1e-14 nats against the capacity stay resolvable.
"""
import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, special

from app.settings import solverSettings
from app.solver.atomic_measures import entropy
from app.solver.data.Channel import ChannelPoint, IntegrationSpec, EntropyViaMmse
from app.solver.data.Distribution import AtomicDistribution
from app.solver.errors import DomainError, IntegrationError, PreconditionError
from app.solver.utils import log_panels

logger = logging.getLogger(__name__)

# input counts as standardized within this
STANDARDIZED_TOL = 1e-6


def capacity(snr: float) -> float:
    if snr < 0:
        raise DomainError(f"snr must be non-negative, got {snr}")
    return 0.5 * math.log1p(snr)


@lru_cache(maxsize=32)
def _noise_nodes(count: int, tail_sigma: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """probabilists' Gauss-Hermite nodes with weights normalised to the standard normal"""
    z, w = special.roots_hermitenorm(count)
    keep = np.abs(z) <= tail_sigma
    z, w = z[keep], w[keep]
    return z, w / w.sum()


def _log_ratio(a: NDArray[np.float64], w: NDArray[np.float64], snr: float,
               z: NDArray[np.float64]) -> NDArray[np.float64]:
    """terms[i, j, k] = ln w_j - z_k d_ij - d_ij^2 / 2"""
    d = math.sqrt(snr) * (a[:, None] - a[None, :])
    return np.log(w)[None, :, None] - d[:, :, None] * z[None, None, :] - 0.5 * d[:, :, None] ** 2


def _mi_relative(a, w, snr, count, tail_sigma) -> float:
    z, omega = _noise_nodes(count, tail_sigma)
    log_density = special.logsumexp(_log_ratio(a, w, snr, z), axis=1)
    return float(-(w @ (log_density @ omega)))


def _mmse_relative(a, w, snr, count, tail_sigma) -> float:
    z, omega = _noise_nodes(count, tail_sigma)
    centered = a - w @ a
    posterior = special.softmax(_log_ratio(a, w, snr, z), axis=1)
    estimate = np.einsum('ijk,j->ik', posterior, centered)
    return float(w @ ((centered[:, None] - estimate) ** 2 @ omega))


def _converged(evaluate: Callable[[int], float], spec: IntegrationSpec, what: str) -> float:
    """Doubles the node count until two successive values agree within spec.tolerance."""
    count = spec.node_count
    previous = evaluate(count)
    for _ in range(solverSettings.max_doublings):
        count *= 2
        current = evaluate(count)
        if abs(current - previous) <= spec.tolerance:
            return current
        logger.debug("%s not converged at %d nodes: %g vs %g", what, count, current, previous)
        previous = current
    raise IntegrationError(f"{what} did not converge up to {count} nodes")


def _clamp(value: float, low: float, high: float, what: str) -> float:
    tol = solverSettings.clamp_tol
    if value < low - tol or value > high + tol:
        raise IntegrationError(f"{what}={value:g} is outside [{low:g}, {high:g}]")
    return min(max(value, low), high)


def mutual_information_fixed(dist: AtomicDistribution, snr: float, node_count: int,
                             tail_sigma: Optional[float] = None) -> float:
    """I(X; snr) at one node count, no convergence check and no clamping."""
    if dist.n_atoms == 1 or snr == 0:
        return 0.0
    a, w = dist.arrays()
    return _mi_relative(a, w, snr, node_count, tail_sigma or solverSettings.tail_sigma)


def _information(dist: AtomicDistribution, snr: float, spec: IntegrationSpec) -> float:
    if dist.n_atoms == 1 or snr == 0:
        return 0.0
    a, w = dist.arrays()
    value = _converged(lambda count: _mi_relative(a, w, snr, count, spec.tail_sigma), spec, "mutual information")
    return _clamp(value, 0.0, entropy(dist), "mutual information")


def mutual_information(pt: ChannelPoint, spec: Optional[IntegrationSpec] = None) -> float:
    """I(X; Y) in nats, clamped to [0, H(X)] when within tolerance of it"""
    return _information(pt.input, pt.snr, spec or IntegrationSpec())


def _estimation_error(dist: AtomicDistribution, gamma: float, spec: IntegrationSpec) -> float:
    if dist.n_atoms == 1:
        return 0.0
    if gamma == 0:
        return dist.variance
    a, w = dist.arrays()
    value = _converged(lambda count: _mmse_relative(a, w, gamma, count, spec.tail_sigma), spec, "mmse")
    return _clamp(value, 0.0, dist.variance, "mmse")


def mmse(pt: ChannelPoint, spec: Optional[IntegrationSpec] = None) -> float:
    """E[(X - E[X|Y])^2] at gamma = pt.snr"""
    return _estimation_error(pt.input, pt.snr, spec or IntegrationSpec())


def _half_mmse_integral(dist: AtomicDistribution, upper: float, spec: IntegrationSpec,
                        smallest: float = 1e-6) -> float:
    """0.5 * integral of mmse over [0, upper], log-spaced panels towards gamma = 0"""
    if dist.n_atoms == 1 or upper == 0:
        return 0.0
    total = 0.0
    for lo, hi in log_panels(upper, smallest):
        value, error = integrate.quad(lambda g: _estimation_error(dist, g, spec), lo, hi,
                                      epsabs=1e-14, epsrel=solverSettings.gamma_rel_tol, limit=100)
        logger.debug("mmse panel [%g, %g]: %g (+- %g)", lo, hi, value, error)
        total += value
    return 0.5 * total


def i_mmse_check(dist: AtomicDistribution, snr: float, spec: Optional[IntegrationSpec] = None) -> float:
    """I(X; snr) - 0.5 * integral_0^snr mmse(X, gamma) dgamma"""
    if snr < 0:
        raise DomainError(f"snr must be non-negative, got {snr}")
    spec = spec or IntegrationSpec()
    residual = _information(dist, snr, spec) - _half_mmse_integral(dist, snr, spec)
    logger.info("I-MMSE residual at snr=%g: %g", snr, residual)
    return residual


def entropy_via_mmse(dist: AtomicDistribution, gamma_max: Optional[float] = None,
                     spec: Optional[IntegrationSpec] = None) -> EntropyViaMmse:
    """
    H(X) = 0.5 * integral_0^inf mmse dgamma, truncated at gamma_max. The rest is estimated by
    fitting exp(-lambda gamma) through mmse(gamma_max / 2) and mmse(gamma_max).
    """
    gamma_max = gamma_max or solverSettings.gamma_max
    if gamma_max <= 0:
        raise DomainError(f"gamma_max must be positive, got {gamma_max}")
    spec = spec or IntegrationSpec()
    if dist.n_atoms == 1:
        return EntropyViaMmse(integral_nats=0.0, tail_nats=0.0, gamma_max=gamma_max)

    integral = _half_mmse_integral(dist, gamma_max, spec, smallest=1e-8)
    middle = _estimation_error(dist, gamma_max / 2, spec)
    last = _estimation_error(dist, gamma_max, spec)
    tail = 0.0
    if last > 0:
        if middle > last:
            decay = math.log(middle / last) / (gamma_max / 2)
            tail = last / (2 * decay)
        else:
            logger.warning("mmse does not decay near gamma_max=%g, tail left out", gamma_max)
    return EntropyViaMmse(integral_nats=integral, tail_nats=tail, gamma_max=gamma_max)


def is_standardized(dist: AtomicDistribution, tol: float = STANDARDIZED_TOL) -> bool:
    return abs(dist.mean) <= tol and abs(dist.second_moment - 1) <= tol


def capacity_gap(dist: AtomicDistribution, snr: float, spec: Optional[IntegrationSpec] = None) -> float:
    """C(snr) - I(X; snr), the non-Gaussianity of a standardized input"""
    if not is_standardized(dist):
        raise PreconditionError(f"input must have mean 0 and unit power, got mean {dist.mean:g} "
                                f"and power {dist.second_moment:g}")
    gap = capacity(snr) - _information(dist, snr, spec or IntegrationSpec())
    return _clamp(gap, 0.0, math.inf, "capacity gap")


def channel_sweep(dist: AtomicDistribution, snr_values: Sequence[float],
                  spec: Optional[IntegrationSpec] = None) -> list[dict[str, float]]:
    spec = spec or IntegrationSpec()
    rows = []
    for snr in snr_values:
        pt = ChannelPoint(snr=snr, input=dist)
        info = mutual_information(pt, spec)
        rows.append({"snr": snr, "I_nats": info, "mmse": mmse(pt, spec), "capacity": capacity(snr),
                     "gap": capacity(snr) - info})
    return rows
