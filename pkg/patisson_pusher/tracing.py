"""
Module contains a decorator that wraps experiment cells in OpenTelemetry spans.

Every cell of an experiment (method × stepsize × horizon) is executed inside a span whose attributes
describe the cell and its outcome. Without a configured tracer provider the OpenTelemetry API hands out
no-op tracers, so tracing costs nothing unless an application installs an SDK.

Attributes added to the spans:
    - `cell.method`: CLI name of the method.
    - `cell.h`: Stepsize.
    - `cell.horizon`: Final time T.
    - `cell.status`: `ok` or the error description.
    - `cell.max_fp_iters`: Largest fixed-point sweep count of the cell.

Example Usage:
    ```python
    @cell_span_decorator(tracer, "convergence")
    def run_cell(cell: Cell) -> CellOutcome:
        ...
    ```
"""

from functools import wraps
from typing import Callable, ParamSpec, Protocol

from opentelemetry.trace import Status, StatusCode, Tracer

from patisson_pusher.methods import Method

P = ParamSpec("P")


class TracedOutcome(Protocol):
    method: Method
    h: float
    horizon: float
    status: str
    max_fp_iters: int

    @property
    def ok(self) -> bool: ...


def cell_span_decorator(
    tracer: Tracer, experiment: str
) -> Callable[[Callable[P, TracedOutcome]], Callable[P, TracedOutcome]]:
    """
    Add a span with the cell attributes around an experiment cell.

    Args:
        tracer (Tracer)
        experiment (str): span name prefix, e.g. `convergence` or `longtime`
    """

    def decorator(func: Callable[P, TracedOutcome]) -> Callable[P, TracedOutcome]:
        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> TracedOutcome:
            with tracer.start_as_current_span(f"{experiment}-cell") as span:
                outcome = func(*args, **kwargs)
                span.set_attribute("cell.method", outcome.method.value)
                span.set_attribute("cell.h", outcome.h)
                span.set_attribute("cell.horizon", outcome.horizon)
                span.set_attribute("cell.status", outcome.status)
                span.set_attribute("cell.max_fp_iters", outcome.max_fp_iters)
                if not outcome.ok:
                    span.set_status(Status(StatusCode.ERROR, outcome.status))
            return outcome

        return wrapper

    return decorator
