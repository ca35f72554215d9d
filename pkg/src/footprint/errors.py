"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 usage/parameter, 2 data, 3 numeric failure.
"""

from __future__ import annotations


class FootprintError(Exception):
    exit_code = 1


class ParameterError(FootprintError, ValueError):
    """Invalid argument or configuration value."""

    exit_code = 1


class DataError(FootprintError):
    exit_code = 2


class ParseError(DataError, ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(DataError, ValueError):
    pass


class ReferentialError(DataError, KeyError):
    def __init__(self, kind: str, ident: str):
        self.kind = kind
        self.ident = ident
        super().__init__(f"unknown {kind} id {ident!r}")

    def __str__(self) -> str:
        return self.args[0]


class EmptyMatrixError(DataError, ValueError):
    pass


class TrimmedToEmptyError(EmptyMatrixError):
    def __init__(self, min_users_per_like: int, min_likes_per_user: int):
        self.min_users_per_like = min_users_per_like
        self.min_likes_per_user = min_likes_per_user
        super().__init__(
            "matrix trimmed to empty with thresholds "
            f"min_users_per_like={min_users_per_like}, "
            f"min_likes_per_user={min_likes_per_user}"
        )


class PrerequisiteError(DataError):
    def __init__(self, artifact: str, command: str):
        self.artifact = artifact
        self.command = command
        super().__init__(f"missing artifact {artifact}; produce it first with `footprint {command}`")


class NumericError(FootprintError, ArithmeticError):
    exit_code = 3


class SingularSystemError(NumericError):
    pass


class OptimizationError(NumericError):
    pass


class UndefinedMetricError(NumericError, ValueError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)


class ContractError(FootprintError, RuntimeError):
    """Internal API misuse, e.g. a backward pass with a stale forward cache."""
