"""Balancing weights for logistic regression with non-monotone missing data."""

from ._core import (
    ContractError,
    Error,
    FitError,
    LoadError,
    LookupError,
    ParseError,
    fit,
    fit_array,
    generate,
    set_quiet,
    simulate,
    validate_graph,
)

__all__ = [
    "ContractError",
    "Error",
    "FitError",
    "LoadError",
    "ParseError",
    "fit",
    "fit_array",
    "generate",
    "set_quiet",
    "simulate",
    "validate_graph",
]
