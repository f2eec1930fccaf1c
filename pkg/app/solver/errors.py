"""
Domain errors. Each derives from a builtin so callers may keep catching ValueError / ArithmeticError;
`code` is what the CLI reports.
"""


class SolverError(Exception):
    code = "solver_error"


class LengthError(SolverError, ValueError):
    code = "length_error"


class NormalizationError(SolverError, ValueError):
    code = "normalization_error"


class DomainError(SolverError, ValueError):
    code = "domain_error"


class DegenerateError(SolverError, ValueError):
    code = "degenerate_error"


class InfeasibleError(SolverError, ValueError):
    code = "infeasible_error"


class PreconditionError(SolverError, ValueError):
    code = "precondition_error"


class InvariantError(SolverError, ValueError):
    code = "invariant_error"


class ConfigError(SolverError, ValueError):
    code = "config_error"


class IntegrationError(SolverError, ArithmeticError):
    code = "integration_error"


class UsageError(SolverError, ValueError):
    code = "usage_error"


class InputError(SolverError, ValueError):
    code = "input_error"
