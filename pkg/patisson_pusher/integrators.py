"""
This module provides the one-step maps for charged-particle dynamics and the trajectory driver.

The energy-preserving schemes advance (xₙ, vₙ) to (xₙ₊₁, vₙ₊₁) by solving

    vₙ₊₁ = vₙ + h·𝔉(xₙ, xₙ₊₁) + h·B̃((xₙ₊₁ + xₙ)/2)·(vₙ₊₁ + vₙ)/2,
    xₙ₊₁ = xₙ + h·(vₙ + vₙ₊₁)/2,

where 𝔉 is the average of the force along the segment [xₙ, xₙ₊₁]: a Gauss-Legendre approximation for the
EPGL(s) methods (`ep1`, `ep2`, `ep3`) or the closed form for potentials U(x) = Û(aᵀx) (`ep-exact`).
The implicit equation is solved by fixed-point iteration on vₙ₊₁ alone; xₙ₊₁ is recomputed from the
current iterate in every sweep, so the second equation holds identically.

The Boris baseline is the synchronized variant: both half-kicks use F(xₙ), the rotation uses B(xₙ), and the
position is advanced with the rotated velocity before the second half-kick.

Classes:
    - SolverParams: Tolerance and iteration cap of the fixed-point iteration.
    - StepResult: The state after one implicit step with its iteration count and final residual.

Functions:
    - fixed_point_solve: Iterate a map until the max-norm change falls below the tolerance.
    - ep_step: One step of an energy-preserving scheme.
    - boris_step: One step of the Boris method.
    - integrate: Apply a method repeatedly and record the sampled trajectory.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from patisson_pusher.core import FieldModel, ParticleState, btilde_apply
from patisson_pusher.diagnostics import Sample, StepFailure, TrajectoryRecord
from patisson_pusher.errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    ErrorCode,
    ErrorSchema,
)
from patisson_pusher.methods import Method, MethodSpec
from patisson_pusher.quadrature import average_force_quadrature, exact_linear_integral, gauss_legendre_rule
from patisson_pusher.types import UpdateMap, Vec3

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


class SolverParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-13, gt=0)
    max_iters: int = Field(default=100, ge=1)


@dataclass(frozen=True)
class StepResult:
    state: ParticleState
    iters: int
    residual: float


def fixed_point_solve(
    initial_guess: Vec3, update_map: UpdateMap, solver: SolverParams
) -> tuple[Vec3, int, float]:
    """
    Iterate w ← update_map(w) until the max-norm change is at most `solver.tol`.

    Args:
        initial_guess (Vec3): starting iterate
        update_map (UpdateMap): a pure map whose fixed point is sought
        solver (SolverParams): tolerance and iteration cap

    Raises:
        DivergenceError: `solver.max_iters` sweeps without convergence, or a non-finite iterate

    Returns:
        tuple[Vec3, int, float]: the fixed point, the number of sweeps and the last change
    """
    w = initial_guess
    residual = math.inf
    for iters in range(1, solver.max_iters + 1):
        w_next = update_map(w)
        residual = float(np.max(np.abs(w_next - w)))
        if not math.isfinite(residual):
            raise DivergenceError(
                ErrorSchema(error=ErrorCode.DIVERGENCE, extra=f"non-finite iterate after {iters} sweeps"),
                residual=residual,
                iters=iters,
            )
        w = w_next
        if residual <= solver.tol:
            return w, iters, residual
    raise DivergenceError(
        ErrorSchema(
            error=ErrorCode.DIVERGENCE,
            extra=f"residual {residual!r} after {solver.max_iters} sweeps (tol {solver.tol!r})",
        ),
        residual=residual,
        iters=solver.max_iters,
    )


def _average_force(model: FieldModel, method: Method) -> Callable[[Vec3, Vec3], Vec3]:
    if method is Method.EP_EXACT:
        if not model.has_linear_direction:
            raise ConfigurationError(
                ErrorSchema(error=ErrorCode.MISSING_LINEAR_DIRECTION, extra=f"model={model.name!r}")
            )
        return lambda x_from, x_to: exact_linear_integral(model, x_from, x_to)
    if method.stages is None:
        raise ConfigurationError(
            ErrorSchema(error=ErrorCode.UNKNOWN_METHOD, extra=f"{method.value!r} is not an implicit scheme")
        )
    rule = gauss_legendre_rule(method.stages)
    return lambda x_from, x_to: average_force_quadrature(model, x_from, x_to, rule)


def ep_step(
    state: ParticleState, model: FieldModel, method: MethodSpec, solver: SolverParams
) -> StepResult:
    """
    Advance the state by one step of an energy-preserving scheme.

    Args:
        state (ParticleState): the current state
        model (FieldModel): the field model
        method (MethodSpec): `ep1`, `ep2`, `ep3` or `ep-exact` with the stepsize
        solver (SolverParams): fixed-point parameters

    Raises:
        ConfigurationError: the method is not implicit, or `ep-exact` on a model without linear direction
        DivergenceError: the fixed-point iteration did not converge
        DomainError: a field evaluation left the model domain

    Returns:
        StepResult
    """
    average_force = _average_force(model, method.kind)
    h = method.h
    x0, v0 = state.x, state.v

    def update(w: Vec3) -> Vec3:
        x1 = x0 + 0.5 * h * (v0 + w)
        magnetic = btilde_apply(model.B(0.5 * (x0 + x1)), 0.5 * (v0 + w))
        return v0 + h * average_force(x0, x1) + h * magnetic

    v1, iters, residual = fixed_point_solve(v0, update, solver)
    x1 = x0 + 0.5 * h * (v0 + v1)
    return StepResult(state=ParticleState(x=x1, v=v1, t=state.t + h), iters=iters, residual=residual)


def boris_step(state: ParticleState, model: FieldModel, h: float) -> ParticleState:
    """
    Advance the state by one synchronized Boris step.

        v⁻ = vₙ + (h/2)F(xₙ),   t = (h/2)B(xₙ),   s = 2t/(1 + |t|²),
        v⁺ = v⁻ + (v⁻ + v⁻ × t) × s,
        xₙ₊₁ = xₙ + h·v⁺,   vₙ₊₁ = v⁺ + (h/2)F(xₙ).

    Raises:
        DomainError: a field evaluation left the model domain
    """
    x, v = state.x, state.v
    half_kick = 0.5 * h * model.F(x)
    t_vec = 0.5 * h * model.B(x)
    s_vec = 2.0 * t_vec / (1.0 + float(t_vec @ t_vec))

    v_minus = v + half_kick
    v_prime = v_minus + np.cross(v_minus, t_vec)
    v_plus = v_minus + np.cross(v_prime, s_vec)
    return ParticleState(x=x + h * v_plus, v=v_plus + half_kick, t=state.t + h)


def step_count(span: float, h: float) -> int:
    """Return (t_end − t0)/h when it is an integer up to rounding, and its floor otherwise."""
    quotient = span / h
    nearest = round(quotient)
    if abs(quotient - nearest) <= 4.0 * np.finfo(float).eps * max(1.0, abs(quotient)):
        return int(nearest)
    return math.floor(quotient)


def _append_last_good(record: TrajectoryRecord, state: ParticleState, model: FieldModel, iters: int) -> None:
    try:
        record.samples.append(Sample.of(state, model, iters))
    except DomainError as e:
        logger.debug(f"last good state at t={state.t!r} has no diagnostics: {e.error_schema.extra}")


def integrate(
    state0: ParticleState,
    model: FieldModel,
    method: MethodSpec,
    solver: SolverParams,
    t_end: float,
    sample_every: int = 1,
    logger_object: Optional[logging.Logger] = None,
) -> TrajectoryRecord:
    """
    Integrate from `state0` to `t_end` with a constant stepsize.

    When (t_end − t0)/h is not an integer the number of steps is truncated, so the record may end before
    t_end but never after it. Step times are t0 + k·h. The initial state, every `sample_every`-th state and
    the final state are recorded.

    Args:
        state0 (ParticleState): the initial state
        model (FieldModel): the field model
        method (MethodSpec): the method and its stepsize
        solver (SolverParams): fixed-point parameters, unused by Boris
        t_end (float): the final time
        sample_every (int): recording stride in steps
        logger_object (Optional[logging.Logger]): logger for failure context, defaults to the module logger

    Raises:
        ConfigurationError: t_end lies behind t0 in the direction of h, sample_every < 1, or the method
            cannot run on the model

    Returns:
        TrajectoryRecord: a failed step ends the record early and is described in `failure`
    """
    log = logger if logger_object is None else logger_object
    h = method.h
    span = t_end - state0.t
    if span * h < 0:
        raise ConfigurationError(
            ErrorSchema(
                error=ErrorCode.INVALID_PARAMETERS,
                extra=f"t_end={t_end!r} is not reachable from t0={state0.t!r} with h={h!r}",
            )
        )
    if sample_every < 1:
        raise ConfigurationError(
            ErrorSchema(error=ErrorCode.INVALID_PARAMETERS, extra=f"sample_every={sample_every}")
        )

    if method.kind is Method.BORIS:

        def advance(state: ParticleState) -> tuple[ParticleState, int]:
            return boris_step(state, model, h), 0

    else:
        _average_force(model, method.kind)

        def advance(state: ParticleState) -> tuple[ParticleState, int]:
            result = ep_step(state, model, method, solver)
            return result.state, result.iters

    n_steps = step_count(span, h)
    record = TrajectoryRecord(method=method, model_name=model.name, samples=[Sample.of(state0, model)])
    state = state0
    last_iters = 0
    for k in range(1, n_steps + 1):
        try:
            advanced, iters = advance(state)
            advanced = replace(advanced, t=state0.t + k * h)
            if k % sample_every == 0 or k == n_steps:
                record.samples.append(Sample.of(advanced, model, iters))
        except (DivergenceError, DomainError) as e:
            residual = e.residual if isinstance(e, DivergenceError) else None
            record.failure = StepFailure(step_index=k, t=state.t, error=e.error_schema, residual=residual)
            log.warning(f"{method.kind.label} on {model.name!r} stopped: {record.failure.describe()}")
            # the record always ends at the last good state
            if record.samples[-1].t != state.t:
                _append_last_good(record, state, model, last_iters)
            break
        state = advanced
        last_iters = iters
        record.steps = k
        record.max_fp_iters = max(record.max_fp_iters, iters)

    log.debug(
        f"{method.kind.label} h={h!r} on {model.name!r}: {record.steps}/{n_steps} steps, "
        f"max fixed-point sweeps {record.max_fp_iters}"
    )
    return record
