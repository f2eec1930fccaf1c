"""
Lower bounds on the entropy-constrained capacity C_H(h, snr): the best mutual information over
standardized finitely supported inputs with H(X) <= h.

The problem is non-convex, every reported value is a certified lower bound of some input, nothing more.
"""
import logging
import math
from time import perf_counter
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, special, stats

from app.settings import solverSettings
from app.solver.atomic_measures import (binary_entropy, entropy, gauss_hermite, inverse_binary_entropy, standardize,
                                        two_point)
from app.solver.data.Channel import ChannelPoint
from app.solver.data.Config import OptimizationConfig
from app.solver.data.Decomposition import TargetMoments
from app.solver.data.Distribution import AtomicDistribution, QuadratureSpec
from app.solver.data.Result import (CapacityEstimate, RestartDiagnostics, SanityReport, ScalingMode, ScalingPoint,
                                    ScalingReport)
from app.solver.errors import DomainError, PreconditionError
from app.solver.gaussian_channel import (capacity, capacity_gap, is_standardized, mutual_information,
                                         mutual_information_fixed)
from app.solver.low_entropy import match_three_moments
from app.solver.utils import default_support_size, find_best_restart

logger = logging.getLogger(__name__)

# logits are kept in this box, weights below e^-60 relative are meaningless anyway
LOGIT_BOUND = 30.0
# padding atoms start with this weight
PAD_WEIGHT = 1e-9
SCALING_SNR_RANGE = (1e-3, 1e-1)


def baseline_entropy_limit() -> float:
    """h2(1/3) in nats, the end of the three-moment regime for the Gaussian"""
    return binary_entropy(1 / 3)


def _standardized_arrays(atoms: NDArray[np.float64], weights: NDArray[np.float64]
                         ) -> Optional[NDArray[np.float64]]:
    mean = weights @ atoms
    variance = weights @ (atoms - mean) ** 2
    if not variance > 1e-300:
        return None
    return (atoms - mean) / math.sqrt(variance)


def _weight_entropy(weights: NDArray[np.float64]) -> float:
    return float(np.sum(special.entr(weights)))


class _Objective:
    """-I + mu * penalty(H - h) over x = (atoms, logits); atoms are re-standardized on every call"""

    def __init__(self, h: float, snr: float, one_sided: bool):
        self.h = h
        self.snr = snr
        self.one_sided = one_sided
        self.node_count = solverSettings.optimizer_node_count
        self.mu = 0.0

    @staticmethod
    def decode(x: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        k = len(x) // 2
        return x[:k], special.softmax(x[k:])

    def __call__(self, x: NDArray[np.float64]) -> float:
        atoms, weights = self.decode(x)
        standardized = _standardized_arrays(atoms, weights)
        if standardized is None:
            return 0.0
        excess = _weight_entropy(weights) - self.h
        if self.one_sided:
            excess = max(excess, 0.0)
        dist = AtomicDistribution.model_construct(atoms=tuple(standardized), weights=tuple(weights))
        return -mutual_information_fixed(dist, self.snr, self.node_count) + self.mu * excess ** 2


def _encode(dist: AtomicDistribution, k: int) -> NDArray[np.float64]:
    """atoms and log-weights, padded with light atoms up to k"""
    atoms, weights = dist.arrays()
    missing = k - len(atoms)
    if missing > 0:
        span = max(1.0, float(np.max(np.abs(atoms))))
        atoms = np.concatenate([atoms, np.linspace(-span, span, missing + 2)[1:-1] + 0.5 / k])
        weights = np.concatenate([weights, np.full(missing, PAD_WEIGHT)])
    logits = np.clip(np.log(weights / weights.sum()), -LOGIT_BOUND, LOGIT_BOUND)
    return np.concatenate([atoms, logits])


def _repair_entropy(weights: NDArray[np.float64], h: float, tolerance: float) -> NDArray[np.float64]:
    """moves weights along (1 - t) w + t e_max until H = h (slightly below)"""
    if _weight_entropy(weights) <= h:
        return weights
    peak = np.zeros_like(weights)
    peak[np.argmax(weights)] = 1.0
    goal = max(h - tolerance / 10, h / 2)

    def excess(t):
        return _weight_entropy((1 - t) * weights + t * peak) - goal

    t = optimize.brentq(excess, 0.0, 1.0, xtol=1e-15)
    repaired = (1 - t) * weights + t * peak
    if _weight_entropy(repaired) > h:
        t = min(1.0, t + 1e-12)
        repaired = (1 - t) * weights + t * peak
    return repaired


def _finalize(atoms: NDArray[np.float64], weights: NDArray[np.float64], h: float,
              cfg: OptimizationConfig) -> Optional[AtomicDistribution]:
    weights = _repair_entropy(weights, h, cfg.entropy_boundary_tolerance)
    keep = weights > 1e-15 * weights.max()
    atoms, weights = atoms[keep], weights[keep] / weights[keep].sum()
    standardized = _standardized_arrays(atoms, weights)
    if standardized is None:
        return None
    try:
        dist = AtomicDistribution(atoms=tuple(standardized), weights=tuple(weights))
    except ValueError:
        return None
    if dist.n_atoms < 2:
        return None
    # merging may have moved the moments a little
    return standardize(dist)


def _ascend(start: AtomicDistribution, objective: _Objective, k: int,
            cfg: OptimizationConfig) -> tuple[NDArray[np.float64], NDArray[np.float64], int]:
    """penalty continuation, every stage warm-started from the last"""
    x = _encode(start, k)
    n = len(x) // 2
    bounds = [(None, None)] * n + [(-LOGIT_BOUND, LOGIT_BOUND)] * n
    iterations = 0
    for stage in range(cfg.penalty_stages):
        objective.mu = cfg.penalty_initial * cfg.penalty_growth ** stage
        fit = optimize.minimize(objective, x, method='L-BFGS-B', jac='3-point', bounds=bounds,
                                options={"maxiter": cfg.max_iterations, "finite_diff_rel_step": cfg.fd_rel_step})
        x = fit.x
        iterations += int(fit.nit)
        logger.debug("stage %d (mu=%g): objective %g after %d iterations", stage, objective.mu, fit.fun, fit.nit)
    atoms, weights = objective.decode(x)
    return atoms, weights, iterations


def _random_start(rng: np.random.Generator, k: int) -> AtomicDistribution:
    atoms = rng.standard_normal(k)
    weights = rng.dirichlet(np.ones(k))
    standardized = _standardized_arrays(atoms, weights)
    return AtomicDistribution(atoms=tuple(standardized), weights=tuple(weights))


def default_warm_starts(h: float, k: int) -> list[tuple[str, AtomicDistribution]]:
    starts: list[tuple[str, AtomicDistribution]] = []
    if h < baseline_entropy_limit():
        gaussian = TargetMoments.gaussian(4)
        starts.append(("baseline", standardize(match_three_moments(gaussian, h))))
        starts.append(("baseline-tight", standardize(match_three_moments(gaussian, h, tight=True))))

    eps = inverse_binary_entropy(min(h, math.log(2)) * (1 - 1e-9))
    if 0 < eps < 1:
        starts.append(("two-point", two_point(eps)))

    fitting = [m for m in range(2, k + 1) if entropy(gauss_hermite(QuadratureSpec(point_count=m))) <= h]
    if fitting:
        m = max(fitting)
        starts.append((f"gauss-hermite-{m}", gauss_hermite(QuadratureSpec(point_count=m))))
    return starts


def _diagnose(index: int, origin: str, dist: AtomicDistribution, info: float, objective: Optional[float],
              h: float, iterations: int, cfg: OptimizationConfig) -> RestartDiagnostics:
    residual = entropy(dist) - h
    return RestartDiagnostics(
        index=index, origin=origin, objective=objective, mutual_information_nats=info,
        entropy_residual=residual, mean_residual=abs(dist.mean), power_residual=abs(dist.second_moment - 1),
        iterations=iterations, boundary_reached=abs(residual) <= cfg.entropy_boundary_tolerance,
    )


def estimate_capacity(h: float, snr: float, cfg: Optional[OptimizationConfig] = None,
                      warm_starts: Sequence[tuple[str, AtomicDistribution]] = ()) -> CapacityEstimate:
    """
    Multi-start local ascent over K atoms and weights. Warm starts are kept as candidates as they are and
    also optimized; seeded random starts follow. The best certified mutual information wins, ties go to
    the lower index.
    """
    if not h > 0:
        raise DomainError(f"entropy budget must be positive, got {h}")
    if not snr > 0:
        raise DomainError(f"snr must be positive, got {snr}")
    cfg = cfg or OptimizationConfig()
    start_time = perf_counter()

    k = cfg.support_size or default_support_size(h)
    one_sided = h >= math.log(k)
    if one_sided:
        logger.warning("h=%g nats >= ln K=%g, entropy boundary unreachable with %d atoms", h, math.log(k), k)
    objective = _Objective(h, snr, one_sided)

    starts = [*warm_starts, *default_warm_starts(h, k)]
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    starts += [("random", _random_start(np.random.default_rng(child), k)) for child in children]

    candidates: list[AtomicDistribution] = []
    diagnostics: list[RestartDiagnostics] = []

    def admit(origin: str, dist: Optional[AtomicDistribution], value: Optional[float], iterations: int):
        if dist is None or entropy(dist) > h + cfg.constraint_tolerance or not is_standardized(dist):
            logger.warning("candidate %s dropped, constraints violated", origin)
            return
        info = mutual_information(ChannelPoint(snr=snr, input=dist))
        diagnostics.append(_diagnose(len(candidates), origin, dist, info, value, h, iterations, cfg))
        candidates.append(dist)

    for origin, start in starts:
        if origin != "random":
            admit(f"{origin} (initial)", start, None, 0)
        atoms, weights, iterations = _ascend(start, objective, max(k, start.n_atoms), cfg)
        admit(origin, _finalize(atoms, weights, h, cfg), float(objective(np.concatenate([atoms, np.log(weights)]))),
              iterations)

    if not candidates:
        raise PreconditionError("no restart produced an admissible input")

    best = find_best_restart([d.mutual_information_nats for d in diagnostics])
    best_effort = not any(d.boundary_reached for d in diagnostics)
    if best_effort:
        logger.warning("no candidate reached H(X)=h, best-effort estimate")

    time_us = max(1, int((perf_counter() - start_time) * 1000 * 1000))
    estimate = CapacityEstimate(
        lower_bound_nats=diagnostics[best].mutual_information_nats, best_input=candidates[best], h=h, snr=snr,
        restarts=tuple(diagnostics), best_effort=best_effort, time_us=time_us,
    )
    logger.info("C_H(%g, %g) >= %g nats from %s", h, snr, estimate.lower_bound_nats, diagnostics[best].origin)
    return estimate


def _baseline_input(h: float) -> AtomicDistribution:
    if not 0 < h < baseline_entropy_limit():
        raise DomainError(f"h must lie in (0, h2(1/3)) = (0, {baseline_entropy_limit():g}) nats, got {h}")
    return standardize(match_three_moments(TargetMoments.gaussian(4), h))


def baseline_three_moment(h: float, snr: float) -> tuple[AtomicDistribution, float]:
    """the standardized three-moment matched input and its mutual information"""
    if not snr > 0:
        raise DomainError(f"snr must be positive, got {snr}")
    dist = _baseline_input(h)
    return dist, mutual_information(ChannelPoint(snr=snr, input=dist))


def gap_scaling_experiment(h: float, snr_grid: Sequence[float], mode: ScalingMode = ScalingMode.baseline,
                           fixed_input: Optional[AtomicDistribution] = None,
                           cfg: Optional[OptimizationConfig] = None) -> ScalingReport:
    """slope of ln(C - I) against ln snr"""
    low, high = SCALING_SNR_RANGE
    if any(not low * (1 - 1e-9) <= snr <= high * (1 + 1e-9) for snr in snr_grid):
        raise DomainError(f"snr grid must lie in [{low:g}, {high:g}]")

    if mode == ScalingMode.fixed:
        if fixed_input is None:
            raise PreconditionError("fixed mode needs an input")
        gaps = [capacity_gap(fixed_input, snr) for snr in snr_grid]
    else:
        baseline = _baseline_input(h)
        if mode == ScalingMode.baseline:
            gaps = [capacity_gap(baseline, snr) for snr in snr_grid]
        else:
            gaps = [capacity(snr) - estimate_capacity(h, snr, cfg, warm_starts=[("baseline", baseline)]).lower_bound_nats
                    for snr in snr_grid]

    floor = solverSettings.gap_floor
    points = tuple(ScalingPoint(snr=snr, gap_nats=gap, excluded=gap < floor) for snr, gap in zip(snr_grid, gaps))
    for p in points:
        if p.excluded:
            logger.warning("gap %g at snr=%g is below the floor %g, excluded", p.gap_nats, p.snr, floor)

    fitted = [p for p in points if not p.excluded]
    if len(fitted) < 2:
        raise DomainError("fewer than two gaps above the numeric floor, no slope")
    fit = stats.linregress([math.log(p.snr) for p in fitted], [math.log(p.gap_nats) for p in fitted])
    logger.info("%s gap slope %g over %d points", mode.value, fit.slope, len(fitted))
    return ScalingReport(h=h, mode=mode, slope=float(fit.slope), intercept=float(fit.intercept), points=points)


def sanity_bounds(est: CapacityEstimate) -> SanityReport:
    """C_H <= h, C_H <= C(snr) and the constraints on the achieving input; positive residuals are violations"""
    tol = solverSettings.sanity_tol
    dist = est.best_input
    info = mutual_information(ChannelPoint(snr=est.snr, input=dist))
    residuals = {
        "entropy_bound_residual": est.lower_bound_nats - est.h,
        "capacity_bound_residual": est.lower_bound_nats - capacity(est.snr),
        "input_entropy_residual": entropy(dist) - est.h,
        "mean_residual": abs(dist.mean),
        "power_residual": dist.second_moment - 1,
        "information_residual": abs(info - est.lower_bound_nats),
    }
    passed = all(value <= tol for value in residuals.values())
    if not passed:
        logger.warning("estimate at h=%g, snr=%g fails sanity checks: %s", est.h, est.snr, residuals)
    return SanityReport(passed=passed, tolerance=tol, **residuals)
