"""Trait prediction from digital footprints: users-likes matrix, SVD, regression and MLPs."""

from .errors import (
    ContractError, DataError, DivergenceError, FootprintError, NumericError, ParameterError,
    PrerequisiteError,
)

__all__ = [
    "ContractError", "DataError", "DivergenceError", "FootprintError", "NumericError", "ParameterError",
    "PrerequisiteError",
]
__version__ = "0.1.0"
