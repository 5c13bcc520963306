"""
This module defines error handling classes and schemas for the integrators, diagnostics and harness.

It includes custom exceptions, error codes, and a Pydantic schema describing an error in a form that can be
stored inside a trajectory record, written to a run manifest, or printed by the command-line front end.

Key Concepts:
- **ErrorCode**: Enum that defines a set of error codes used throughout the package. Each code represents
    a specific error message, such as an unknown model name, a field singularity or a fixed-point iteration
    that did not converge.
- **ErrorSchema**: A Pydantic model that represents the error structure. It includes the error code
    and an optional extra message for additional details (offending point, residual, step index).
- **PusherError**: The base exception. Every subclass carries an `ErrorSchema` in `error_schema`.
- **ConfigurationError**: Raised for invalid names, parameters or model/method combinations.
- **DomainError**: Raised when a field model is evaluated at a singular point or returns non-finite values.
- **DivergenceError**: Raised when the fixed-point iteration of an implicit step does not converge.
- **AlignmentError**: Raised when two trajectory records are compared at different final times.

Usage:
    - To raise an error, instantiate the appropriate exception class with an `ErrorSchema`:
      ```python
      raise ConfigurationError(ErrorSchema(error=ErrorCode.UNKNOWN_MODEL, extra="name='dipole'"))
      ```
    - The command-line front end maps exception classes to exit codes (see `patisson_pusher.cli`).
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict


class ErrorCode(Enum):
    INVALID_PARAMETERS = "the passed parameters are not correct"
    UNKNOWN_MODEL = "unknown field model"
    UNKNOWN_METHOD = "unknown integration method"
    UNSUPPORTED_STAGES = "the number of Gauss-Legendre stages is not supported"
    MISSING_LINEAR_DIRECTION = "the field model has no linear direction for the exact integral"
    MISSING_VECTOR_POTENTIAL = "the field model has no vector potential"
    INVALID_STEPSIZE = "the stepsize must be non-zero"

    DOMAIN_ERROR = "the field model was evaluated outside of its domain"
    NON_FINITE = "the field model returned a non-finite value"
    DIVERGENCE = "the fixed-point iteration did not converge"
    ALIGNMENT = "the compared records end at different times"


class ErrorSchema(BaseModel):
    """Pydantic model for a package error."""

    model_config = ConfigDict(use_enum_values=True)

    error: ErrorCode
    extra: Optional[str] = None

    def describe(self) -> str:
        message = ErrorCode(self.error).value
        return message if self.extra is None else f"{message}: {self.extra}"


class PusherError(Exception):

    def __init__(self, error: ErrorSchema) -> None:
        super().__init__(error.describe())
        self.error_schema = error


class ConfigurationError(PusherError, ValueError): ...


class DomainError(PusherError, ArithmeticError): ...


class DivergenceError(PusherError, ArithmeticError):

    def __init__(self, error: ErrorSchema, residual: float, iters: int) -> None:
        super().__init__(error)
        self.residual = residual
        self.iters = iters


class AlignmentError(PusherError, ValueError): ...
