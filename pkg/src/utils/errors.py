"""
Exception hierarchy for rsquant

Every error carries the process exit code the CLI reports for it.
"""

from typing import List, Optional


class RsquantError(Exception):
    exit_code = 1


class PreconditionError(RsquantError, ValueError):
    """Input rejected before any numerical work started."""

    exit_code = 2


class UnknownDensityError(PreconditionError):
    def __init__(self, name: str, catalog: List[str]):
        self.name = name
        self.catalog = catalog
        super().__init__(f"unknown density '{name}'; available: {', '.join(catalog)}")


class CodebookError(PreconditionError):
    """A point set that violates the codebook invariants."""


class ConvergenceError(RsquantError):
    exit_code = 3


class QuadratureError(RsquantError, ArithmeticError):
    """An integrand produced NaN at a quadrature node."""

    exit_code = 3

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (node {index})")
