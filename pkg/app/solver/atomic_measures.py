"""
Finitely supported distributions: moments, entropy, standardization, recovery from truncated
moment sequences and the Gauss-Hermite quadrature distributions.

Entropies are computed in nats; every function that reports one takes an explicit `base`.
"""
import logging
import math
from typing import Optional

import numpy as np
from scipy import linalg, optimize, special, stats

from app.settings import solverSettings
from app.solver.data.Distribution import AtomicDistribution, QuadratureSpec
from app.solver.data.Moments import MomentSequence, Feasibility
from app.solver.errors import DegenerateError, DomainError, InfeasibleError, NormalizationError
from app.solver.moment_core import hankel, psd_check, psd_verdict, truncated_feasible, PsdVerdict

logger = logging.getLogger(__name__)


def point_mass(c: float) -> AtomicDistribution:
    return AtomicDistribution(atoms=(c,), weights=(1.0,))


def two_point(eps: float) -> AtomicDistribution:
    """Standardized binary input with Pr{X = b} = eps, b > 0."""
    if not 0 < eps < 1:
        raise DomainError(f"two-point weight must lie in (0, 1), got {eps}")
    return AtomicDistribution(atoms=(-math.sqrt(eps / (1 - eps)), math.sqrt((1 - eps) / eps)),
                              weights=(1 - eps, eps))


def moments(dist: AtomicDistribution, k: int) -> MomentSequence:
    if k < 0:
        raise DomainError(f"moment order must be non-negative, got {k}")
    a, w = dist.arrays()
    powers = np.vander(a, k + 1, increasing=True)
    values = w @ powers
    values[0] = 1.0
    return MomentSequence(values=tuple(float(v) for v in values))


def _check_base(base: float):
    if not base > 1:
        raise DomainError(f"log base must exceed 1, got {base}")


def entropy(dist: AtomicDistribution, base: float = math.e) -> float:
    _check_base(base)
    if dist.n_atoms == 1:
        return 0.0
    return float(stats.entropy(dist.weights, base=base))


def binary_entropy(x: float, base: float = math.e) -> float:
    _check_base(base)
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    return float((special.entr(x) + special.entr(1 - x)) / math.log(base))


def inverse_binary_entropy(y: float, base: float = math.e) -> float:
    """The x in [0, 1/2] with h2(x) = y, by bisection."""
    _check_base(base)
    y_max = math.log(2) / math.log(base)
    if not 0 <= y <= y_max * (1 + 1e-12):
        raise DomainError(f"inverse binary entropy needs y in [0, {y_max}], got {y}")
    if y == 0:
        return 0.0
    if y >= y_max:
        return 0.5
    return float(optimize.bisect(lambda x: binary_entropy(x, base) - y, 0.0, 0.5,
                                 xtol=solverSettings.bisection_xtol, maxiter=200))


def standardize(dist: AtomicDistribution) -> AtomicDistribution:
    """lambda (X - E[X]) with lambda = 1/sqrt(Var X); weights untouched"""
    if dist.n_atoms < 2:
        raise DegenerateError("a single atom has zero variance and can't be standardized")
    return dist.affine(1 / math.sqrt(dist.variance), -dist.mean / math.sqrt(dist.variance))


def minimal_extension(seq: MomentSequence) -> float:
    """
    Smallest s~_4 with det H_2(1, s_1, s_2, s_3, s~_4) = 0.
    The determinant is affine in s~_4 with coefficient s_2 - s_1^2, which solves to
    s~_4 = s_2^2 + (s_3 - s_1 s_2)^2 / (s_2 - s_1^2).
    """
    if len(seq.values) < 4:
        raise InfeasibleError(f"minimal extension needs s_0..s_3, got {len(seq.values)} values")
    _, s1, s2, s3 = seq.values[:4]
    variance = s2 - s1 ** 2
    if psd_check(hankel(seq, 1)) != PsdVerdict.PositiveDefinite or variance <= 0:
        raise InfeasibleError(f"H_1 of {seq} is not positive definite")
    return s2 ** 2 + (s3 - s1 * s2) ** 2 / variance


def gauss_hermite(spec: QuadratureSpec) -> AtomicDistribution:
    """
    Golub-Welsch: eigenvalues of the Jacobi matrix of the probabilists' Hermite recurrence
    (diagonal 0, off-diagonal sqrt(j)) are the atoms, squared first eigenvector components the weights.
    """
    m = spec.point_count
    if m == 1:
        return point_mass(0.0)
    off = np.sqrt(np.arange(1, m, dtype=float))
    nodes, vectors = linalg.eigh_tridiagonal(np.zeros(m), off)
    weights = vectors[0, :] ** 2
    # the rule is symmetric, enforce it exactly
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return AtomicDistribution(atoms=tuple(nodes), weights=tuple(weights / weights.sum()))


def _recover_exact(s: np.ndarray, n: int) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """
    Prony step on 2n scaled moments: the monic orthogonal polynomial of degree n solves
    H_{n-1} c = -(s_n, ..., s_{2n-1}); its roots are the atoms, a Vandermonde solve gives the weights.
    """
    if n == 1:
        return np.array([s[1]]), np.array([1.0])
    h = linalg.hankel(s[:n], s[n - 1:2 * n - 1])
    tol = solverSettings.psd_rel_tol * (1 + float(np.max(np.abs(h))))
    if psd_verdict(h, tol) != PsdVerdict.PositiveDefinite:
        return None
    coefficients = linalg.solve(h, -s[n:2 * n], assume_a="sym")
    roots = np.polynomial.polynomial.polyroots(np.append(coefficients, 1.0))
    if np.any(np.abs(roots.imag) > solverSettings.imag_root_tol * (1 + np.abs(roots.real))):
        raise InfeasibleError("moment polynomial has complex roots, no representing measure")
    atoms = np.sort(roots.real)
    vandermonde = np.vander(atoms, n, increasing=True).T
    weights = linalg.solve(vandermonde, s[:n])
    return atoms, weights


def _polish(s: np.ndarray, atoms: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Levenberg-Marquardt on the moment equations sum_j w_j a_j^i = s_i, i < 2n."""
    n = len(atoms)
    orders = np.arange(len(s))

    def residual(p):
        a, w = p[:n], p[n:]
        return np.vander(a, len(s), increasing=True).T @ w - s

    def jacobian(p):
        a, w = p[:n], p[n:]
        powers = np.vander(a, len(s), increasing=True).T
        lower = np.vstack([np.zeros(n), powers[:-1]])
        return np.hstack([lower * orders[:, None] * w[None, :], powers])

    fit = optimize.least_squares(residual, np.concatenate([atoms, weights]), jac=jacobian, method='lm',
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return fit.x[:n], fit.x[n:]


def _fit(s: np.ndarray, moments_used: np.ndarray, n_max: int, tol: float) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Largest n <= n_max whose Hankel system is regular; None when that fit misses s."""
    k = len(s) - 1
    for n in range(n_max, 0, -1):
        recovered = _recover_exact(moments_used, n)
        if recovered is None:
            logger.debug("H_%d is singular, reducing atom count", n - 1)
            continue
        atoms, weights = _polish(moments_used[:2 * n], *recovered)
        if np.any(weights < -tol):
            raise InfeasibleError("recovered negative weights, no representing measure")
        keep = weights > tol
        atoms, weights = atoms[keep], weights[keep]
        check = np.vander(atoms, k + 1, increasing=True).T @ weights
        if np.all(np.abs(check - s) <= tol * (1 + abs(s[k])) * (1 + np.abs(s))):
            return atoms, weights
        return None
    return None


def prony_recover(seq: MomentSequence, tol: float = 1e-9) -> AtomicDistribution:
    """
    Atomic measure with at most floor(k/2)+1 atoms whose first k moments equal seq.
    Rank-deficient Hankel systems reduce the atom count; even k tries the k/2-atom fit first and
    only then extends the sequence by a feasibility witness.
    """
    if tol < 0:
        raise DomainError(f"tolerance must be non-negative, got {tol}")
    if not seq.is_normalized():
        raise NormalizationError(f"recovery needs s_0 = 1, got {seq.values[0]}")
    k = seq.k
    if k == 0:
        return point_mass(0.0)
    if k == 1:
        return point_mass(seq.values[1])

    raw = seq.as_array()
    # rescale so the atoms land in about [-1, 1]
    scale = max(abs(raw[j]) ** (1 / j) for j in range(1, k + 1)) or 1.0
    s = raw / scale ** np.arange(k + 1)

    if k % 2 == 1:
        fitted = _fit(s, s, (k + 1) // 2, tol)
    else:
        try:
            fitted = _fit(s, s[:k], k // 2, tol)
        except InfeasibleError:
            fitted = None
        if fitted is None:
            feasibility = truncated_feasible(seq)
            if feasibility.verdict == Feasibility.Infeasible:
                raise InfeasibleError(f"{seq} has no representing measure")
            odd = feasibility.witness[0] / scale ** (k + 1)
            fitted = _fit(s, np.append(s, odd), k // 2 + 1, tol)

    if fitted is None:
        raise InfeasibleError(f"no atomic measure with at most {k // 2 + 1} atoms reproduces {seq}")
    atoms, weights = fitted
    return AtomicDistribution(atoms=tuple(atoms * scale), weights=tuple(weights / weights.sum()))
