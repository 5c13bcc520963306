"""
This module provides the conserved quantities of charged-particle dynamics and error measurements.

Classes:
    - Sample: One recorded state with its diagnostics.
    - StepFailure: The context of a step that aborted an integration.
    - TrajectoryRecord: A sampled trajectory produced by `patisson_pusher.integrators.integrate`.
    - InvarianceReport: A Pydantic model with the deviations of the invariance conditions.

Functions:
    - energy: E(x, v) = ½|v|² + U(x).
    - momentum: M(x, v) = (v + A(x))ᵀSx.
    - rotation_matrix: e^{τS} for a skew-symmetric 3x3 generator.
    - invariance_check: Check U(e^{τS}x) = U(x) and e^{−τS}A(e^{τS}x) = A(x) at probe points.
    - drift_series: |Q(t) − Q(t₀)| along a record.
    - global_error: Max-norm distance of the final (x, v) of two records.
    - reference_oracle: The high-accuracy reference trajectory used for every global error.
    - oracle_pass, combine_oracle_passes: The two halves of `reference_oracle`, for parallel runs.
    - local_error: One-step error of a method against the reference.

Energy and momentum are functions of (x, v) only; the values stored in a record are produced by the same
functions, so recomputing them from the record reproduces them exactly.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel

from patisson_pusher.core import FieldModel, ParticleState, RotationGenerator
from patisson_pusher.errors import AlignmentError, ConfigurationError, ErrorCode, ErrorSchema
from patisson_pusher.methods import Method, MethodSpec
from patisson_pusher.types import Vec3

ALIGNMENT_TOL = 1e-12
INVARIANCE_TOL = 1e-12

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


class Quantity(Enum):
    ENERGY = "energy"
    MOMENTUM = "momentum"


def energy(x: Vec3, v: Vec3, model: FieldModel) -> float:
    """
    Return E(x, v) = ½(v₁² + v₂² + v₃²) + U(x).

    Raises:
        DomainError: U is not defined at x
    """
    return 0.5 * float(v @ v) + model.U(x)


def momentum(x: Vec3, v: Vec3, model: FieldModel, S: RotationGenerator) -> float:
    """
    Return M(x, v) = (v + A(x))ᵀSx.

    With the axial generator (Sx = (x₂, −x₁, 0)) this is (v₁ + A₁)x₂ − (v₂ + A₂)x₁.

    Raises:
        ConfigurationError: the model has no vector potential
    """
    return float((v + model.A(x)) @ S.apply(x))


@dataclass(frozen=True)
class Sample:
    t: float
    x: Vec3
    v: Vec3
    energy: float
    momentum: Optional[float]
    fp_iters: int

    @classmethod
    def of(cls, state: ParticleState, model: FieldModel, fp_iters: int = 0) -> "Sample":
        return cls(
            t=state.t,
            x=state.x,
            v=state.v,
            energy=energy(state.x, state.v, model),
            momentum=(
                momentum(state.x, state.v, model, model.symmetry)
                if model.has_vector_potential and model.symmetry is not None
                else None
            ),
            fp_iters=fp_iters,
        )

    @property
    def state(self) -> ParticleState:
        return ParticleState(x=self.x, v=self.v, t=self.t)


@dataclass(frozen=True)
class StepFailure:
    step_index: int
    t: float
    error: ErrorSchema
    residual: Optional[float] = None

    def describe(self) -> str:
        message = f"step {self.step_index} at t={self.t!r}: {self.error.describe()}"
        return message if self.residual is None else f"{message} (residual {self.residual!r})"


@dataclass
class TrajectoryRecord:
    method: MethodSpec
    model_name: str
    samples: list[Sample] = field(default_factory=list)
    max_fp_iters: int = 0
    steps: int = 0
    failure: Optional[StepFailure] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def initial(self) -> Sample:
        return self.samples[0]

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    @property
    def final_time(self) -> float:
        return self.final.t

    @property
    def has_momentum(self) -> bool:
        return bool(self.samples) and self.samples[0].momentum is not None


def drift_series(record: TrajectoryRecord, quantity: Quantity | str) -> list[tuple[float, float]]:
    """
    Return the absolute deviation |Q(t) − Q(t₀)| at every sample of the record.

    Raises:
        ConfigurationError: the record carries no momentum
    """
    quantity = Quantity(quantity)
    if quantity is Quantity.MOMENTUM and not record.has_momentum:
        raise ConfigurationError(
            ErrorSchema(error=ErrorCode.MISSING_VECTOR_POTENTIAL, extra=f"record of {record.model_name!r}")
        )
    values = [getattr(sample, quantity.value) for sample in record.samples]
    initial = values[0]
    return [(sample.t, abs(value - initial)) for sample, value in zip(record.samples, values, strict=True)]


def max_drift(record: TrajectoryRecord, quantity: Quantity | str) -> float:
    return max(drift for _, drift in drift_series(record, quantity))


def global_error(record: TrajectoryRecord, oracle: TrajectoryRecord) -> float:
    """
    Return the max-norm over the six components of (x, v) of the final-state difference.

    Raises:
        AlignmentError: the records end at different times
    """
    final, reference = record.final, oracle.final
    if abs(final.t - reference.t) > ALIGNMENT_TOL * max(1.0, abs(reference.t)):
        raise AlignmentError(
            ErrorSchema(error=ErrorCode.ALIGNMENT, extra=f"record t={final.t!r}, oracle t={reference.t!r}")
        )
    return float(max(np.max(np.abs(final.x - reference.x)), np.max(np.abs(final.v - reference.v))))


def rotation_matrix(S: RotationGenerator, tau: float) -> np.ndarray:
    """
    Return e^{τS} by the Rodrigues formula.

    For a 3x3 skew-symmetric S generated by b with θ = |b|, S³ = −θ²S and therefore
    e^{τS} = I + sin(τθ)/θ · S + (1 − cos(τθ))/θ² · S².
    """
    matrix = S.matrix
    theta = float(np.linalg.norm(S.S.vector))
    if theta == 0.0:
        return np.eye(3)
    return (
        np.eye(3)
        + math.sin(tau * theta) / theta * matrix
        + (1.0 - math.cos(tau * theta)) / theta**2 * (matrix @ matrix)
    )


class InvarianceReport(BaseModel):
    potential_deviation: float
    vector_potential_deviation: float
    tolerance: float
    passed: bool


def invariance_check(
    model: FieldModel,
    S: RotationGenerator,
    probe_points: Sequence[Vec3],
    taus: Sequence[float],
    tolerance: float = INVARIANCE_TOL,
) -> InvarianceReport:
    """
    Evaluate the invariance conditions of the momentum at every (probe, τ) pair.

    Raises:
        ConfigurationError: the model has no vector potential
        DomainError: a rotated probe hits a singularity

    Returns:
        InvarianceReport: the largest deviations of U(e^{τS}x) − U(x) and e^{−τS}A(e^{τS}x) − A(x)
    """
    if not model.has_vector_potential:
        raise ConfigurationError(ErrorSchema(error=ErrorCode.MISSING_VECTOR_POTENTIAL, extra=model.name))

    potential_deviation = 0.0
    vector_potential_deviation = 0.0
    for tau in taus:
        forward = rotation_matrix(S, tau)
        backward = rotation_matrix(S, -tau)
        for probe in probe_points:
            x = np.asarray(probe, dtype=np.float64)
            rotated = forward @ x
            potential_deviation = max(potential_deviation, abs(model.U(rotated) - model.U(x)))
            deviation = backward @ model.A(rotated) - model.A(x)
            vector_potential_deviation = max(vector_potential_deviation, float(np.max(np.abs(deviation))))

    return InvarianceReport(
        potential_deviation=potential_deviation,
        vector_potential_deviation=vector_potential_deviation,
        tolerance=tolerance,
        passed=potential_deviation <= tolerance and vector_potential_deviation <= tolerance,
    )


class OracleSettings(BaseModel):
    refinement: int = 14
    max_step: float = 1e-3
    tol: float = 1e-15
    max_iters: int = 200
    extrapolate: bool = True

    def steps(self, span: float) -> int:
        """Power-of-two step count with at least 2^refinement steps and a step no larger than max_step."""
        n = 2**self.refinement
        while abs(span) / n > self.max_step:
            n *= 2
        return n


def oracle_pass(
    state0: ParticleState,
    model: FieldModel,
    t_end: float,
    settings: Optional[OracleSettings] = None,
    halvings: int = 0,
) -> TrajectoryRecord:
    """
    Run EPGL(3) with n·2^halvings steps from `state0` to `t_end`, recording the first and last states.

    `reference_oracle` combines the passes with `halvings` 0 and 1; they are independent of each other and
    may run in separate processes.
    """
    from patisson_pusher.integrators import SolverParams, integrate

    settings = OracleSettings() if settings is None else settings
    span = t_end - state0.t
    if span == 0:
        spec = MethodSpec(kind=Method.EP3, h=1.0)
        return TrajectoryRecord(method=spec, model_name=model.name, samples=[Sample.of(state0, model)])

    n = settings.steps(span) * 2**halvings
    logger.debug(f"reference oracle for {model.name!r}: {n} steps of {span / n!r} up to t={t_end!r}")
    solver = SolverParams(tol=settings.tol, max_iters=settings.max_iters)
    return integrate(state0, model, MethodSpec(kind=Method.EP3, h=span / n), solver, t_end, sample_every=n)


def combine_oracle_passes(
    coarse: TrajectoryRecord, fine: TrajectoryRecord, model: FieldModel
) -> TrajectoryRecord:
    """Return the Richardson combination (4·fine − coarse)/3 of two passes, or the first failed pass."""
    if not coarse.ok:
        return coarse
    if not fine.ok:
        return fine
    if fine.steps == 0:
        return fine

    extrapolated = ParticleState(
        x=(4.0 * fine.final.x - coarse.final.x) / 3.0,
        v=(4.0 * fine.final.v - coarse.final.v) / 3.0,
        t=fine.final.t,
    )
    return TrajectoryRecord(
        method=fine.method,
        model_name=model.name,
        samples=[fine.initial, Sample.of(extrapolated, model, fine.final.fp_iters)],
        max_fp_iters=max(coarse.max_fp_iters, fine.max_fp_iters),
        steps=coarse.steps + fine.steps,
    )


def reference_oracle(
    state0: ParticleState,
    model: FieldModel,
    t_end: float,
    settings: Optional[OracleSettings] = None,
) -> TrajectoryRecord:
    """
    Compute the reference trajectory used for all global-error measurements.

    EPGL(3) runs with h_ref = (t_end − t0)/n, n a power of two (see `OracleSettings.steps`), at solver
    tolerance 1e-15. With `extrapolate` a second run at h_ref/2 is combined as (4·y(h_ref/2) − y(h_ref))/3;
    the method is symmetric, so this removes the h² term of the error.

    Returns:
        TrajectoryRecord: the initial sample and the sample at t_end; a failed run returns its partial record
    """
    settings = OracleSettings() if settings is None else settings
    coarse = oracle_pass(state0, model, t_end, settings)
    if not settings.extrapolate or not coarse.ok:
        return coarse
    return combine_oracle_passes(coarse, oracle_pass(state0, model, t_end, settings, halvings=1), model)


def local_error(
    state: ParticleState,
    model: FieldModel,
    method: MethodSpec,
    settings: Optional[OracleSettings] = None,
) -> float:
    """Return the max-norm error of a single step of `method` against the reference flow."""
    from patisson_pusher.integrators import SolverParams, integrate

    t_end = state.t + method.h
    step = integrate(state, model, method, SolverParams(), t_end)
    return global_error(step, reference_oracle(state, model, t_end, settings))
