import argparse
import json
import logging
import os
import sys
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from time import perf_counter
from typing import Any, Callable, Optional, Sequence

from pydantic import ValidationError

from app.settings import version, solverSettings
from app.solver.atomic_measures import entropy, gauss_hermite, moments, prony_recover, standardize, two_point
from app.solver.capacity_opt import baseline_three_moment, estimate_capacity, gap_scaling_experiment, sanity_bounds
from app.solver.data.Channel import ChannelPoint, IntegrationSpec
from app.solver.data.Command import CommandResult, CommandStatus
from app.solver.data.Config import OptimizationConfig
from app.solver.data.Decomposition import TargetMoments, CertificateGrid
from app.solver.data.Distribution import AtomicDistribution, QuadratureSpec
from app.solver.data.Moments import MomentSequence, Feasibility
from app.solver.data.Result import CapacityEstimate, ScalingMode
from app.solver.errors import SolverError, UsageError, ConfigError, InputError
from app.solver.gaussian_channel import (capacity, capacity_gap, channel_sweep, entropy_via_mmse, i_mmse_check,
                                         mmse, mutual_information)
from app.solver.low_entropy import det_sweep, eta, four_moment_certificate, match_three_moments
from app.solver.moment_core import center_moments, hankel, hankel_rank, leading_minors, psd_check, truncated_feasible
from app.solver.utils import geometric_grid, to_bits, to_nats

logger = logging.getLogger(__name__)

# handlers return (payload, csv rows, artifact written by --out)
Outcome = tuple[dict[str, Any], list[dict[str, Any]], Optional[str]]

# argparse takes "-1,1" for an option, so these flags get their value attached as --flag=value
LIST_FLAGS = ("--atoms", "--weights", "--seq")


class _Parser(argparse.ArgumentParser):
    """raises instead of exiting so run() can report usage errors as results"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def attach_lists(argv: Sequence[str]) -> list[str]:
    joined = []
    tokens = iter(argv)
    for token in tokens:
        value = next(tokens, None) if token in LIST_FLAGS else None
        joined.append(token if value is None else f"{token}={value}")
    return joined


# -- inputs --

def _unit(args) -> str:
    return "nats" if args.nats else "bits"


def _convert(nats: float, args) -> float:
    return nats if args.nats else to_bits(nats)


def _entropy_budget(args) -> float:
    return args.h_nats if args.h_nats is not None else to_nats(args.h_bits)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"can't read {path}: {e.strerror or e}")


def _distribution(args) -> AtomicDistribution:
    if args.dist is not None:
        return AtomicDistribution.model_validate_json(_read_text(args.dist))
    if args.atoms is None:
        raise UsageError("an input distribution is required: --dist or --atoms/--weights")
    weights = args.weights or tuple(1 / len(args.atoms) for _ in args.atoms)
    return AtomicDistribution(atoms=args.atoms, weights=weights)


def _target(args) -> TargetMoments:
    for name in ("gaussian", "uniform", "laplace", "exponential"):
        if getattr(args, name):
            return getattr(TargetMoments, name)(8)
    given = [args.m1, args.m2, args.m3, args.m4]
    if args.m2 is None:
        if any(m is not None for m in given):
            raise UsageError("explicit target moments start at --m2")
        # no target flag: standard normal
        return TargetMoments.gaussian(8)
    values = [0.0 if args.m1 is None else args.m1]
    for m in given[1:]:
        if m is None:
            break
        values.append(m)
    return TargetMoments(m=tuple(values), symmetric=args.symmetric)


def _integration(args) -> IntegrationSpec:
    update = {k: v for k, v in (("node_count", args.node_count), ("tail_sigma", args.tail_sigma)) if v is not None}
    return IntegrationSpec(**update)


def _apply_config(path: Optional[str]) -> dict[str, Any]:
    """Updates solverSettings in place, returns the optimizer keys."""
    if path is None:
        return {}
    file = Path(path)
    try:
        if file.suffix == ".toml":
            values = tomllib.loads(file.read_text())
        else:
            values = json.loads(file.read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"can't read config {path}: {e}")
    if not isinstance(values, dict):
        raise ConfigError("config must be a flat key-value table")

    optimizer = {}
    for key, value in values.items():
        if key in type(solverSettings).model_fields:
            try:
                setattr(solverSettings, key, value)
            except ValidationError as e:
                raise ConfigError(f"invalid setting {key}={value!r}: {e.errors()[0]['msg']}")
        elif key in OptimizationConfig.model_fields:
            optimizer[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    return optimizer


def _optimization(args, optimizer: dict[str, Any]) -> OptimizationConfig:
    flags = {"support_size": args.support_size, "restarts": args.restarts, "max_iterations": args.max_iterations,
             "seed": args.seed}
    values = {**optimizer, **{k: v for k, v in flags.items() if v is not None}}
    try:
        return OptimizationConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid optimizer config: {e.errors()[0]['msg']}")


def _dist_payload(dist: AtomicDistribution, args) -> dict[str, Any]:
    return {"atoms": list(dist.atoms), "weights": list(dist.weights),
            f"entropy_{_unit(args)}": _convert(entropy(dist), args)}


# -- subcommands --

def _moments_check(args, _) -> Outcome:
    seq = MomentSequence(values=args.seq)
    mat = hankel(seq, seq.k // 2)
    minors = leading_minors(mat)
    payload = {"order": mat.order, "verdict": psd_check(mat, args.tol).value, "rank": hankel_rank(mat, args.tol),
               "minors": minors}
    if seq.is_normalized():
        feasibility = truncated_feasible(seq, args.tol)
        payload["feasibility"] = feasibility.verdict.value
        if feasibility.verdict == Feasibility.Feasible:
            payload["witness"] = list(feasibility.witness)
    return payload, [{"order": i + 1, "minor": m} for i, m in enumerate(minors)], None


def _moments_center(args, _) -> Outcome:
    centered = center_moments(MomentSequence(values=args.seq))
    return {"values": list(centered.values)}, [{"n": i, "moment": v} for i, v in enumerate(centered.values)], None


def _moments_recover(args, _) -> Outcome:
    dist = prony_recover(MomentSequence(values=args.seq), args.tol or 1e-9)
    return _dist_payload(dist, args), dist.rows(), dist.model_dump_json()


def _quadrature(args, _) -> Outcome:
    dist = gauss_hermite(QuadratureSpec(point_count=args.m))
    return _dist_payload(dist, args), dist.rows(), dist.model_dump_json()


def _eta(args, _) -> Outcome:
    result = eta(_target(args))
    threshold = result.entropy_threshold_nats if args.nats else result.entropy_threshold_bits
    payload = {"eta": result.eta, f"threshold_{_unit(args)}": threshold, "method": result.method.value}
    return payload, [payload], None


def _certificate(args, _) -> Outcome:
    target = _target(args)
    update = {k: v for k, v in (("eps_points", args.eps_points), ("x0_points", args.x0_points)) if v is not None}
    grid = CertificateGrid(**update)
    report = four_moment_certificate(target, _entropy_budget(args), grid)
    payload = report.model_dump(mode='json')
    rows = []
    if args.csv:
        eps_values = [report.eps_max * (i + 1) / grid.eps_points for i in range(grid.eps_points)]
        rows = [{k: row[k] for k in ("eps", "x0", "det1", "det3")}
                for row in det_sweep(target.centered(), eps_values, grid.x0_points, grid.margin)]
    return payload, rows, None


def _match3(args, _) -> Outcome:
    dist = match_three_moments(_target(args), _entropy_budget(args), tight=args.tight)
    payload = _dist_payload(dist, args)
    payload["moments"] = list(moments(dist, 4).values[1:])
    return payload, dist.rows(), dist.model_dump_json()


def _channel_info(args, _) -> Outcome:
    dist = _distribution(args)
    info = mutual_information(ChannelPoint(snr=args.snr, input=dist), _integration(args))
    unit = _unit(args)
    payload = {"snr": args.snr, f"I_{unit}": _convert(info, args), f"entropy_{unit}": _convert(entropy(dist), args),
               f"capacity_{unit}": _convert(capacity(args.snr), args)}
    return payload, [payload], None


def _channel_mmse(args, _) -> Outcome:
    value = mmse(ChannelPoint(snr=args.snr, input=_distribution(args)), _integration(args))
    return {"snr": args.snr, "mmse": value}, [{"snr": args.snr, "mmse": value}], None


def _channel_immse(args, _) -> Outcome:
    residual = i_mmse_check(_distribution(args), args.snr, _integration(args))
    payload = {"snr": args.snr, f"residual_{_unit(args)}": _convert(residual, args)}
    return payload, [payload], None


def _channel_gap(args, _) -> Outcome:
    dist = _distribution(args)
    if args.standardize:
        dist = standardize(dist)
    gap = capacity_gap(dist, args.snr, _integration(args))
    payload = {"snr": args.snr, f"gap_{_unit(args)}": _convert(gap, args)}
    return payload, [payload], None


def _channel_entropy(args, _) -> Outcome:
    result = entropy_via_mmse(_distribution(args), args.gamma_max, _integration(args))
    unit = _unit(args)
    payload = {f"integral_{unit}": _convert(result.integral_nats, args), f"tail_{unit}": _convert(result.tail_nats, args),
               f"estimate_{unit}": _convert(result.estimate_nats, args), "gamma_max": result.gamma_max}
    return payload, [payload], None


def _channel_sweep(args, _) -> Outcome:
    rows = channel_sweep(_distribution(args), geometric_grid(args.snr_min, args.snr_max, args.points),
                         _integration(args))
    return {"rows": rows}, rows, None


def _capacity_estimate(args, optimizer) -> Outcome:
    h = _entropy_budget(args)
    est = estimate_capacity(h, args.snr, _optimization(args, optimizer))
    payload = est.model_dump(mode='json', exclude={"time_us"})
    payload[f"lower_bound_{_unit(args)}"] = _convert(est.lower_bound_nats, args)
    return payload, est.rows(), est.model_dump_json()


def _capacity_baseline(args, _) -> Outcome:
    dist, info = baseline_three_moment(_entropy_budget(args), args.snr)
    payload = _dist_payload(dist, args)
    payload.update({"snr": args.snr, f"I_{_unit(args)}": _convert(info, args),
                    f"gap_{_unit(args)}": _convert(capacity(args.snr) - info, args)})
    return payload, dist.rows(), dist.model_dump_json()


def _capacity_scaling(args, optimizer) -> Outcome:
    mode = ScalingMode(args.mode)
    fixed = None
    if mode == ScalingMode.fixed:
        fixed = _distribution(args) if (args.dist or args.atoms) else two_point(0.5)
    grid = geometric_grid(args.snr_min, args.snr_max, args.points)
    h = _entropy_budget(args) if (args.h_bits is not None or args.h_nats is not None) else to_nats(0.5)
    report = gap_scaling_experiment(h, grid, mode, fixed_input=fixed, cfg=_optimization(args, optimizer))
    return report.model_dump(mode='json'), report.rows(), None


def _capacity_sanity(args, _) -> Outcome:
    est = CapacityEstimate.model_validate_json(_read_text(args.estimate))
    report = sanity_bounds(est)
    return report.model_dump(mode='json'), report.rows(), None


def _version(args, _) -> Outcome:
    return {"version": version}, [{"version": version}], None


def _settings(args, _) -> Outcome:
    payload = solverSettings.model_dump(mode='json')
    return payload, [payload], None


# -- parser --

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output (default)")
    fmt.add_argument("--csv", action="store_true", help="CSV output, 17 significant digits")
    common.add_argument("--nats", action="store_true", help="report information in nats instead of bits")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="flat JSON or TOML key-value file")
    common.add_argument("--out", default=None, help="write the result file here")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def _add_target(p: argparse.ArgumentParser):
    named = p.add_mutually_exclusive_group()
    for name in ("gaussian", "uniform", "laplace", "exponential"):
        named.add_argument(f"--{name}", action="store_true")
    for name in ("m1", "m2", "m3", "m4"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--symmetric", action="store_true")


def _add_budget(p: argparse.ArgumentParser, required: bool = True):
    budget = p.add_mutually_exclusive_group(required=required)
    budget.add_argument("--h-bits", type=float, default=None)
    budget.add_argument("--h-nats", type=float, default=None)


def _add_dist(p: argparse.ArgumentParser):
    p.add_argument("--dist", default=None, help="JSON file with atoms and weights")
    p.add_argument("--atoms", type=_floats, default=None)
    p.add_argument("--weights", type=_floats, default=None)
    p.add_argument("--node-count", type=int, default=None)
    p.add_argument("--tail-sigma", type=float, default=None)


def _add_snr_grid(p: argparse.ArgumentParser, low: float, high: float, points: int):
    p.add_argument("--snr-min", type=float, default=low)
    p.add_argument("--snr-max", type=float, default=high)
    p.add_argument("--points", type=int, default=points)


def _add_optimizer(p: argparse.ArgumentParser):
    p.add_argument("--support-size", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="lowentropy", description="Low-entropy moment matching and entropy-constrained "
                                                    "Gaussian channel capacity")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(group, name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = group.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        return p

    moment_group = commands.add_parser("moments", help="Hankel feasibility, centering, recovery").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    for name, handler, help_text in (("check", _moments_check, "PSD verdict, leading minors and feasibility"),
                                     ("center", _moments_center, "moments of X - E[X]"),
                                     ("recover", _moments_recover, "atomic measure from a moment prefix")):
        p = leaf(moment_group, name, handler, help_text)
        p.add_argument("--seq", type=_floats, required=True, help="s_0,s_1,...,s_k")
        p.add_argument("--tol", type=float, default=None)

    leaf(commands, "quadrature", _quadrature, "m-point Gauss-Hermite distribution").add_argument(
        "--m", type=int, required=True)
    _add_target(leaf(commands, "eta", _eta, "four-moment entropy threshold of a target"))

    p = leaf(commands, "certificate", _certificate, "four-moment infeasibility certificate")
    _add_target(p)
    _add_budget(p)
    p.add_argument("--eps-points", type=int, default=None)
    p.add_argument("--x0-points", type=int, default=None)

    p = leaf(commands, "match3", _match3, "three-moment matching with bounded entropy")
    _add_target(p)
    _add_budget(p)
    p.add_argument("--tight", action="store_true", help="use almost the whole entropy budget")

    channel_group = commands.add_parser("channel", help="AWGN numerics for discrete inputs").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    for name, handler, help_text in (("info", _channel_info, "mutual information"),
                                     ("mmse", _channel_mmse, "minimum mean squared error"),
                                     ("immse-check", _channel_immse, "I - 0.5 * integral of mmse"),
                                     ("gap", _channel_gap, "capacity minus mutual information")):
        p = leaf(channel_group, name, handler, help_text)
        _add_dist(p)
        p.add_argument("--snr", type=float, required=True)
        if name == "gap":
            p.add_argument("--standardize", action="store_true")
    p = leaf(channel_group, "entropy", _channel_entropy, "entropy as half the mmse integral")
    _add_dist(p)
    p.add_argument("--gamma-max", type=float, default=None)
    p = leaf(channel_group, "sweep", _channel_sweep, "I, mmse, capacity and gap over a snr grid")
    _add_dist(p)
    _add_snr_grid(p, 1e-2, 1e2, 9)

    capacity_group = commands.add_parser("capacity", help="entropy-constrained capacity bounds").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = leaf(capacity_group, "estimate", _capacity_estimate, "optimized lower bound")
    _add_budget(p)
    p.add_argument("--snr", type=float, required=True)
    _add_optimizer(p)
    p = leaf(capacity_group, "baseline", _capacity_baseline, "three-moment matched lower bound")
    _add_budget(p)
    p.add_argument("--snr", type=float, required=True)
    p = leaf(capacity_group, "scaling", _capacity_scaling, "log-log slope of the capacity gap")
    _add_budget(p, required=False)
    p.add_argument("--mode", choices=[m.value for m in ScalingMode], default=ScalingMode.baseline.value)
    _add_dist(p)
    _add_optimizer(p)
    _add_snr_grid(p, 1e-3, 1e-1, 9)
    p = leaf(capacity_group, "sanity", _capacity_sanity, "trivial upper bounds on an estimate")
    p.add_argument("--estimate", required=True, help="JSON written by capacity estimate --out")

    leaf(commands, "version", _version, "print the version")
    leaf(commands, "settings", _settings, "print the numerical settings")
    return parser


# -- output --

def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def render(result: CommandResult, csv: bool) -> str:
    if csv and result.rows:
        header = list(result.rows[0].keys())
        lines = [",".join(header)] + [",".join(_cell(row[k]) for k in header) for row in result.rows]
        return "\n".join(lines) + "\n"
    return json.dumps(result.payload, indent=2) + "\n"


def write_atomically(path: str, text: str):
    target = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    except OSError as e:
        raise InputError(f"can't write {path}: {e.strerror or e}")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, target)
    except BaseException as e:
        if os.path.exists(tmp):
            os.remove(tmp)
        if isinstance(e, OSError):
            raise InputError(f"can't write {path}: {e.strerror or e}")
        raise


def run(argv: Sequence[str]) -> CommandResult:
    """Parses argv and dispatches; usage errors exit with 2, domain errors with 1."""
    start_time = perf_counter()
    saved = solverSettings.model_dump()
    try:
        try:
            args = build_parser().parse_args(attach_lists(argv))
        except SystemExit as e:
            # --help
            return CommandResult.ok({"help": True}) if not e.code else CommandResult.error(
                "usage_error", "invalid arguments", exit_code=2)
        if args.verbose:
            logging.getLogger("app").setLevel(logging.DEBUG)

        optimizer = _apply_config(args.config)
        payload, rows, artifact = args.handler(args, optimizer)
        elapsed = perf_counter() - start_time
        result = CommandResult.ok(payload, rows, elapsed=elapsed)
        if args.out is not None:
            write_atomically(args.out, artifact if artifact is not None else render(result, args.csv))
        return result.model_copy(update={"csv": args.csv})
    except UsageError as e:
        return CommandResult.error(e.code, str(e), exit_code=2, elapsed=perf_counter() - start_time)
    except (SolverError, ValidationError) as e:
        code = e.code if isinstance(e, SolverError) else "validation_error"
        logger.info("command failed: %s", e)
        return CommandResult.error(code, str(e), elapsed=perf_counter() - start_time)
    finally:
        for key, value in saved.items():
            setattr(solverSettings, key, value)


def main() -> int:
    logging.basicConfig(level=solverSettings.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    result = run(sys.argv[1:])
    if result.status == CommandStatus.ok:
        if not result.payload.get("help"):
            sys.stdout.write(render(result, result.csv))
    else:
        sys.stderr.write(json.dumps(result.payload) + "\n")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
