"""
This module defines the names that form the command-line contract of the package.

Classes:
    - Method: Enumeration of one-step integration methods with their CLI spelling.
    - ModelName: Enumeration of the built-in field models with their CLI spelling.
    - MethodSpec: A validated (method, stepsize) pair.
"""

import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, field_validator

from patisson_pusher.errors import ErrorCode


class Method(Enum):
    BORIS = "boris"
    EP1 = "ep1"
    EP2 = "ep2"
    EP3 = "ep3"
    EP_EXACT = "ep-exact"

    @property
    def stages(self) -> Optional[int]:
        """Gauss-Legendre stage count of an EPGL method, None for the others."""
        return {Method.EP1: 1, Method.EP2: 2, Method.EP3: 3}.get(self)

    @property
    def is_energy_preserving(self) -> bool:
        return self is not Method.BORIS

    @property
    def label(self) -> str:
        return "BORIS" if self is Method.BORIS else self.name.replace("_", "-")


class ModelName(Enum):
    PAPER_SEC6 = "paper-sec6"
    CONSTANT_B = "constant-B"
    FREE_FLIGHT = "free-flight"


class MethodSpec(BaseModel):
    """A method together with its stepsize; a negative stepsize integrates backwards."""

    model_config = ConfigDict(frozen=True)

    kind: Method
    h: float

    @field_validator("h")
    @classmethod
    def _check_stepsize(cls, h: float) -> float:
        if h == 0 or not math.isfinite(h):
            raise ValueError(f"{ErrorCode.INVALID_STEPSIZE.value}, got h={h}")
        return h

    def reversed(self) -> "MethodSpec":
        return self.model_copy(update={"h": -self.h})
