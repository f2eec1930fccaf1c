"""
Moment sequences, Hankel matrices and the truncated Hamburger feasibility test.

A finite prefix (s_0, ..., s_k) is the moment sequence of some distribution on the real line iff
s_0 = 1 and the Hankel matrix one order up can be completed to a positive semidefinite one.
"""
import logging
from math import comb
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from app.settings import solverSettings
from app.solver.data.Moments import MomentSequence, HankelMatrix, PsdVerdict, Feasibility, FeasibilityResult
from app.solver.errors import DomainError, LengthError, NormalizationError

logger = logging.getLogger(__name__)

# margins added to the minimal extension value while searching for a witness
_WITNESS_MARGINS = (0.0, 1.0, 10.0, 100.0)
_ODD_CANDIDATES = (0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0)


def hankel(seq: MomentSequence, n: int) -> HankelMatrix:
    if n < 0:
        raise LengthError(f"hankel order must be non-negative, got {n}")
    if len(seq.values) < 2 * n + 1:
        raise LengthError(f"hankel of order {n} needs {2 * n + 1} moments, got {len(seq.values)}")
    return HankelMatrix(order=n, generators=seq.values[:2 * n + 1])


def hankel_from_values(values) -> HankelMatrix:
    values = tuple(float(v) for v in values)
    if len(values) % 2 != 1:
        raise LengthError("hankel generators must have odd length 2n+1")
    return HankelMatrix(order=(len(values) - 1) // 2, generators=values)


def default_tolerance(mat: HankelMatrix) -> float:
    return solverSettings.psd_rel_tol * (1 + mat.max_abs_entry())


def _pivoted_pivots(a: NDArray[np.float64], tol: float) -> tuple[list[float], bool]:
    """
    Symmetric elimination with diagonal pivoting (largest remaining diagonal first).
    Returns the pivots and whether a remaining block stayed non-negligible after a zero pivot,
    which makes the matrix indefinite.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    pivots: list[float] = []

    for i in range(n):
        d = a.diagonal()[i:]
        j = i + int(np.argmax(d))
        if j != i:
            a[:, [i, j]] = a[:, [j, i]]
            a[[i, j], :] = a[[j, i], :]

        pivot = a[i, i]
        if pivot <= tol:
            # largest remaining diagonal is (numerically) not positive
            rest = a[i:, i:]
            pivots.extend(np.diag(rest).tolist())
            return pivots, pivot >= -tol and bool(np.max(np.abs(rest)) > tol)

        pivots.append(float(pivot))
        a[i + 1:, i + 1:] -= np.outer(a[i + 1:, i], a[i + 1:, i]) / pivot

    return pivots, False


def psd_verdict(a: NDArray[np.float64], tol: float) -> PsdVerdict:
    pivots, coupled_zero_block = _pivoted_pivots(a, tol)
    if coupled_zero_block or any(p < -tol for p in pivots):
        return PsdVerdict.Indefinite
    if all(p > tol for p in pivots):
        return PsdVerdict.PositiveDefinite
    return PsdVerdict.PositiveSemidefinite


def psd_check(mat: HankelMatrix, tol: Optional[float] = None) -> PsdVerdict:
    if tol is None:
        tol = default_tolerance(mat)
    if tol < 0:
        raise DomainError(f"tolerance must be non-negative, got {tol}")
    return psd_verdict(mat.as_array(), tol)


def hankel_rank(mat: HankelMatrix, tol: Optional[float] = None) -> int:
    """Numerical rank, counted as pivots above the tolerance."""
    if tol is None:
        tol = default_tolerance(mat)
    if tol < 0:
        raise DomainError(f"tolerance must be non-negative, got {tol}")
    pivots, _ = _pivoted_pivots(mat.as_array(), tol)
    return sum(1 for p in pivots if p > tol)


def leading_minors(mat: HankelMatrix) -> list[float]:
    """Determinants of the leading principal submatrices of order 1..n+1 (pivoted LU)."""
    a = mat.as_array()
    return [float(linalg.det(a[:k, :k])) for k in range(1, a.shape[0] + 1)]


def center_moments(raw: MomentSequence) -> MomentSequence:
    """Moments of X - m_1: m'_n = sum_i (-1)^i C(n, i) m_{n-i} m_1^i."""
    if not raw.is_normalized():
        raise NormalizationError(f"centering needs s_0 = 1, got {raw.values[0]}")
    if raw.k < 1:
        return raw
    return shift_moments(raw, -raw.values[1], exact_first=True)


def shift_moments(seq: MomentSequence, c: float, exact_first: bool = False) -> MomentSequence:
    """Moments of X + c."""
    s = seq.values
    shifted = [sum(comb(n, i) * s[n - i] * c ** i for i in range(n + 1)) for n in range(len(s))]
    if exact_first and len(shifted) > 1:
        shifted[1] = 0.0
    return MomentSequence(values=tuple(shifted))


def _schur_extension(h: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    """Smallest s making [[h, b], [b^T, s]] singular, i.e. b^T h^+ b."""
    return float(b @ linalg.pinvh(h) @ b)


def _first_psd_extension(values: list[float], n: int, tol: float) -> Optional[float]:
    """Scans s~_{2n+2} upwards from the minimal value until H_{n+1} is PSD."""
    s = np.asarray(values, dtype=float)
    h = linalg.hankel(s[:n + 1], s[n:2 * n + 1])
    b = s[n + 1:2 * n + 2]
    minimal = _schur_extension(h, b)
    scale = 1 + abs(minimal)
    for margin in _WITNESS_MARGINS:
        candidate = minimal + margin * scale
        ext = hankel_from_values([*values, candidate])
        if psd_check(ext, max(tol, default_tolerance(ext))) != PsdVerdict.Indefinite:
            return candidate
    return None


def _recurrence_extension(values: list[float], n: int) -> Optional[float]:
    """
    Continues a singular H_n by its kernel polynomial, giving the s~_{2n+1} of the flat extension.
    """
    s = np.asarray(values, dtype=float)
    h = linalg.hankel(s[:n + 1], s[n:2 * n + 1])
    _, vecs = linalg.eigh(h)
    v = vecs[:, 0]
    if abs(v[n]) < 1e-12:
        return None
    # sum_j v_j s_{n+1+j} = 0 solved for the unknown s_{2n+1}
    known = float(v[:n] @ s[n + 1:2 * n + 1])
    return -known / v[n]


def truncated_feasible(seq: MomentSequence, tol: Optional[float] = None) -> FeasibilityResult:
    if not seq.is_normalized():
        raise NormalizationError(f"feasibility needs s_0 = 1, got {seq.values[0]}")
    values = list(seq.values)
    k = seq.k

    if k == 0:
        return FeasibilityResult(verdict=Feasibility.Feasible, witness=(0.0, 0.0))

    n = k // 2
    h_n = hankel(seq, n)
    if tol is None:
        tol = default_tolerance(h_n)
    if psd_check(h_n, tol) == PsdVerdict.Indefinite:
        logger.debug("H_%d of %s is indefinite", n, seq)
        return FeasibilityResult(verdict=Feasibility.Infeasible)

    if k % 2 == 1:
        extension = _first_psd_extension(values, n, tol)
        if extension is None:
            return FeasibilityResult(verdict=Feasibility.Infeasible)
        return FeasibilityResult(verdict=Feasibility.Feasible, witness=(extension,))

    # even k: s~_{2n+1} is free as well
    odd_candidates = list(_ODD_CANDIDATES)
    recurrence = _recurrence_extension(values, n)
    if recurrence is not None:
        odd_candidates.insert(0, recurrence)
    for odd in odd_candidates:
        extension = _first_psd_extension([*values, odd], n, tol)
        if extension is not None:
            return FeasibilityResult(verdict=Feasibility.Feasible, witness=(odd, extension))

    logger.info("no extension of %s found on the search grid", seq)
    return FeasibilityResult(verdict=Feasibility.Infeasible)
