"""
This module provides the fundamental types of charged-particle dynamics and the built-in field models.

The dynamics are x'' = x' × B(x) + F(x) with F = -∇U. A particle state is the triple (x, v, t), the
magnetic term is applied through the skew-symmetric matrix B̃(x) with B̃(x)w = w × B(x), and a field model
bundles the evaluators of B, U, F and optionally the vector potential A and the one-dimensional profile Û of
a potential of the form U(x) = Û(aᵀx).

Classes:
    - ParticleState: An immutable (x, v, t) snapshot.
    - SkewMatrix3: The three independent entries of a 3x3 skew-symmetric matrix generated by a vector.
    - RotationGenerator: A skew-symmetric matrix S generating the rotational symmetry of a model.
    - FieldModel: Evaluators of a field model, with finiteness checks on every evaluation.
    - ConsistencyReport: A Pydantic model with the finite-difference residuals of a model.

Functions:
    - vec3: Build a finite float64 vector of shape (3,).
    - btilde_apply: Apply B̃ to a vector.
    - consistency_check: Validate F = -∇U and ∇×A = B by central differences.
    - builtin_model: Build one of the models named in `patisson_pusher.methods.ModelName`.
    - linear_potential_model: Build a model whose potential depends on aᵀx only.

All evaluators are pure functions of their argument, so models can be shared between threads.
"""

import math
from dataclasses import dataclass, field
from typing import NoReturn, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from patisson_pusher.errors import ConfigurationError, DomainError, ErrorCode, ErrorSchema
from patisson_pusher.methods import ModelName
from patisson_pusher.types import ScalarField, ScalarFunction, Vec3, VectorField

DEFAULT_FD_STEP = 1e-5
DEFAULT_FD_TOLERANCE = 1e-5
AXIS_EPS = 1e-12


def vec3(*components: float) -> Vec3:
    """
    Build a vector of three finite components.

    Raises:
        DomainError: a component is NaN or infinite
    """
    vector = np.asarray(components, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(vector)):
        raise DomainError(ErrorSchema(error=ErrorCode.NON_FINITE, extra=f"components={vector.tolist()}"))
    return vector


@dataclass(frozen=True)
class ParticleState:
    x: Vec3
    v: Vec3
    t: float = 0.0

    @classmethod
    def from_components(cls, x: Sequence[float], v: Sequence[float], t: float = 0.0) -> "ParticleState":
        return cls(x=vec3(*x), v=vec3(*v), t=float(t))


@dataclass(frozen=True)
class SkewMatrix3:
    """
    Skew-symmetric matrix generated by the vector (b1, b2, b3).

    The entries are laid out so that applying the matrix to w gives w × b:

        [[  0,  b3, -b2],
         [-b3,   0,  b1],
         [ b2, -b1,   0]]
    """

    b1: float
    b2: float
    b3: float

    @classmethod
    def from_vector(cls, b: Vec3) -> "SkewMatrix3":
        return cls(float(b[0]), float(b[1]), float(b[2]))

    @property
    def vector(self) -> Vec3:
        return np.array([self.b1, self.b2, self.b3])

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [
                [0.0, self.b3, -self.b2],
                [-self.b3, 0.0, self.b1],
                [self.b2, -self.b1, 0.0],
            ]
        )

    def apply(self, w: Vec3) -> Vec3:
        return btilde_apply(self.vector, w)


def btilde_apply(B: Vec3, w: Vec3) -> Vec3:
    """Return B̃w = (B₃w₂ − B₂w₃, −B₃w₁ + B₁w₃, B₂w₁ − B₁w₂), which equals w × B."""
    if np.ndim(B) == 1 and np.ndim(w) == 1:
        return np.array([B[2] * w[1] - B[1] * w[2], B[0] * w[2] - B[2] * w[0], B[1] * w[0] - B[0] * w[1]])
    return np.cross(w, B)


@dataclass(frozen=True)
class RotationGenerator:
    S: SkewMatrix3

    @property
    def matrix(self) -> np.ndarray:
        return self.S.as_matrix()

    def apply(self, x: Vec3) -> Vec3:
        return self.S.apply(x)


def axial_rotation() -> RotationGenerator:
    """Generator of rotations about e₃: Sx = (x₂, −x₁, 0)."""
    return RotationGenerator(S=SkewMatrix3(0.0, 0.0, 1.0))


def field_rotation(B: Vec3) -> RotationGenerator:
    """Generator Sv = v × B of a constant magnetic field."""
    return RotationGenerator(S=SkewMatrix3.from_vector(B))


@dataclass(frozen=True, kw_only=True)
class FieldModel:
    """
    Field model of charged-particle dynamics.

    Attributes:
        name (str): The name written to records and manifests.
        B_eval (VectorField): Magnetic field.
        U_eval (ScalarField): Scalar potential.
        F_eval (VectorField): Force, expected to equal -∇U.
        A_eval (Optional[VectorField]): Vector potential with ∇×A = B, required for momentum.
        linear_direction (Optional[Vec3]): The vector a when U(x) = Û(aᵀx).
        Uhat_eval (Optional[ScalarFunction]): Û, required with `linear_direction`.
        Uhat_prime (Optional[ScalarFunction]): Û′, required with `linear_direction`.
        symmetry (Optional[RotationGenerator]): Generator S of the invariance U(e^{τS}x) = U(x).
        vectorized (bool): The evaluators accept stacked positions of shape (n, 3).
    """

    name: str
    B_eval: VectorField
    U_eval: ScalarField
    F_eval: VectorField
    A_eval: Optional[VectorField] = None
    linear_direction: Optional[Vec3] = None
    Uhat_eval: Optional[ScalarFunction] = None
    Uhat_prime: Optional[ScalarFunction] = None
    symmetry: Optional[RotationGenerator] = field(default=None)
    vectorized: bool = False

    def __post_init__(self) -> None:
        if self.linear_direction is not None and (self.Uhat_eval is None or self.Uhat_prime is None):
            raise ConfigurationError(
                ErrorSchema(
                    error=ErrorCode.INVALID_PARAMETERS,
                    extra=f"model {self.name!r} has a linear direction but no Û or Û′",
                )
            )

    @property
    def has_vector_potential(self) -> bool:
        return self.A_eval is not None

    @property
    def has_linear_direction(self) -> bool:
        return self.linear_direction is not None

    def B(self, x: Vec3) -> Vec3:
        return self._checked(self.B_eval(x), "B", x)

    def F(self, x: Vec3) -> Vec3:
        return self._checked(self.F_eval(x), "F", x)

    def U(self, x: Vec3) -> float:
        return float(self._checked(np.asarray(self.U_eval(x)), "U", x))

    def A(self, x: Vec3) -> Vec3:
        if self.A_eval is None:
            raise ConfigurationError(
                ErrorSchema(error=ErrorCode.MISSING_VECTOR_POTENTIAL, extra=f"model={self.name!r}")
            )
        return self._checked(self.A_eval(x), "A", x)

    def _checked(self, value: np.ndarray, quantity: str, x: Vec3) -> np.ndarray:
        if not np.all(np.isfinite(value)):
            raise DomainError(
                ErrorSchema(
                    error=ErrorCode.NON_FINITE,
                    extra=f"{quantity} of model {self.name!r} at x={np.asarray(x).tolist()}",
                )
            )
        return value


class ConsistencyReport(BaseModel):
    force_residual: float
    curl_residual: Optional[float] = None
    fd_step: float
    tolerance: float
    passed: bool


def _fd_gradient(scalar: ScalarField, x: Vec3, step: float) -> Vec3:
    gradient = np.empty(3)
    for i, e in enumerate(np.eye(3)):
        gradient[i] = (scalar(x + step * e) - scalar(x - step * e)) / (2.0 * step)
    return gradient


def _fd_curl(vector: VectorField, x: Vec3, step: float) -> Vec3:
    # jacobian[i, j] = ∂A_i/∂x_j
    jacobian = np.empty((3, 3))
    for j, e in enumerate(np.eye(3)):
        jacobian[:, j] = (vector(x + step * e) - vector(x - step * e)) / (2.0 * step)
    return np.array(
        [
            jacobian[2, 1] - jacobian[1, 2],
            jacobian[0, 2] - jacobian[2, 0],
            jacobian[1, 0] - jacobian[0, 1],
        ]
    )


def consistency_check(
    model: FieldModel,
    probe_points: Sequence[Vec3],
    fd_step: float = DEFAULT_FD_STEP,
    tolerance: float = DEFAULT_FD_TOLERANCE,
) -> ConsistencyReport:
    """
    Compare F with -∇U and, when A is present, ∇×A with B using central differences.

    Args:
        model (FieldModel): the model to validate
        probe_points (Sequence[Vec3]): points away from the model singularities
        fd_step (float): central difference step
        tolerance (float): the largest accepted max-norm residual

    Raises:
        ConfigurationError: fd_step is not positive
        DomainError: a probe (or one of its stencil points) hits a singularity

    Returns:
        ConsistencyReport
    """
    if fd_step <= 0:
        raise ConfigurationError(ErrorSchema(error=ErrorCode.INVALID_PARAMETERS, extra=f"fd_step={fd_step}"))

    force_residual = 0.0
    curl_residual = 0.0 if model.has_vector_potential else None
    for index, probe in enumerate(probe_points):
        x = np.asarray(probe, dtype=np.float64)
        try:
            gradient = _fd_gradient(model.U, x, fd_step)
            force_residual = max(force_residual, float(np.max(np.abs(model.F(x) + gradient))))
            if curl_residual is not None:
                curl = _fd_curl(model.A, x, fd_step)
                curl_residual = max(curl_residual, float(np.max(np.abs(curl - model.B(x)))))
        except DomainError as e:
            raise DomainError(
                ErrorSchema(
                    error=ErrorCode.DOMAIN_ERROR,
                    extra=f"probe {index} at {x.tolist()}: {e.error_schema.extra}",
                )
            ) from e

    passed = force_residual <= tolerance and (curl_residual is None or curl_residual <= tolerance)
    return ConsistencyReport(
        force_residual=force_residual,
        curl_residual=curl_residual,
        fd_step=fd_step,
        tolerance=tolerance,
        passed=passed,
    )


def _axis_distance(x: np.ndarray, model_name: str) -> np.ndarray:
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r < AXIS_EPS):
        _raise_on_axis(x, model_name)
    return r


def _raise_on_axis(x: np.ndarray, model_name: str) -> NoReturn:
    raise DomainError(
        ErrorSchema(
            error=ErrorCode.DOMAIN_ERROR,
            extra=f"model {model_name!r} is singular on the e3 axis, x={np.asarray(x).tolist()}",
        )
    )


def _paper_sec6() -> FieldModel:
    name = ModelName.PAPER_SEC6.value

    # B and F are evaluated in every fixed-point sweep
    def B(x: Vec3) -> Vec3:
        if np.ndim(x) == 1:
            r = math.hypot(x[0], x[1])
            if r < AXIS_EPS:
                _raise_on_axis(x, name)
            return np.array([0.0, 0.0, r])
        r = _axis_distance(x, name)
        return np.stack([np.zeros_like(r), np.zeros_like(r), r], axis=-1)

    def U(x: Vec3) -> float:
        return 1.0 / (100.0 * _axis_distance(x, name))

    def F(x: Vec3) -> Vec3:
        if np.ndim(x) == 1:
            x1, x2 = float(x[0]), float(x[1])
            r = math.hypot(x1, x2)
            if r < AXIS_EPS:
                _raise_on_axis(x, name)
            scale = 1.0 / (100.0 * r**3)
            return np.array([x1 * scale, x2 * scale, 0.0])
        r = _axis_distance(x, name)
        scale = 1.0 / (100.0 * r**3)
        return np.stack([x[..., 0] * scale, x[..., 1] * scale, np.zeros_like(r)], axis=-1)

    def A(x: Vec3) -> Vec3:
        r = _axis_distance(x, name)
        return np.stack([-x[..., 1] * r / 3.0, x[..., 0] * r / 3.0, np.zeros_like(r)], axis=-1)

    return FieldModel(
        name=name, B_eval=B, U_eval=U, F_eval=F, A_eval=A, symmetry=axial_rotation(), vectorized=True
    )


def _constant_b(field_strength: float) -> FieldModel:
    b = vec3(0.0, 0.0, field_strength)

    def B(x: Vec3) -> Vec3:
        return np.broadcast_to(b, np.shape(x)).copy()

    def A(x: Vec3) -> Vec3:
        half = 0.5 * field_strength
        return np.stack([-half * x[..., 1], half * x[..., 0], np.zeros_like(x[..., 0])], axis=-1)

    return FieldModel(
        name=ModelName.CONSTANT_B.value,
        B_eval=B,
        U_eval=_zero_potential,
        F_eval=np.zeros_like,
        A_eval=A,
        linear_direction=vec3(0.0, 0.0, 1.0),
        Uhat_eval=_zero_profile,
        Uhat_prime=_zero_profile,
        symmetry=axial_rotation(),
        vectorized=True,
    )


def _free_flight() -> FieldModel:
    return FieldModel(
        name=ModelName.FREE_FLIGHT.value,
        B_eval=np.zeros_like,
        U_eval=_zero_potential,
        F_eval=np.zeros_like,
        A_eval=np.zeros_like,
        linear_direction=vec3(0.0, 0.0, 1.0),
        Uhat_eval=_zero_profile,
        Uhat_prime=_zero_profile,
        symmetry=axial_rotation(),
        vectorized=True,
    )


def linear_potential_model(
    name: str,
    direction: Sequence[float],
    Uhat: ScalarFunction,
    Uhat_prime: ScalarFunction,
    B_eval: Optional[VectorField] = None,
    A_eval: Optional[VectorField] = None,
    symmetry: Optional[RotationGenerator] = None,
) -> FieldModel:
    """
    Build a model with U(x) = Û(aᵀx) and F(x) = −a Û′(aᵀx); B defaults to zero.

    Such models run with `ep-exact` as well as with the quadrature methods.
    """
    a = vec3(*direction)

    def U(x: Vec3) -> float:
        return Uhat(float(x @ a))

    def F(x: Vec3) -> Vec3:
        return -a * Uhat_prime(float(x @ a))

    return FieldModel(
        name=name,
        B_eval=np.zeros_like if B_eval is None else B_eval,
        U_eval=U,
        F_eval=F,
        A_eval=A_eval,
        linear_direction=a,
        Uhat_eval=Uhat,
        Uhat_prime=Uhat_prime,
        symmetry=symmetry,
    )


def _zero_potential(x: Vec3) -> np.ndarray:
    return np.zeros(np.shape(x)[:-1])


def _zero_profile(xi: float) -> float:
    return 0.0


def builtin_model(name: str | ModelName, field_strength: float = 1.0) -> FieldModel:
    """
    Build a built-in field model.

    Args:
        name (str | ModelName): one of `paper-sec6`, `constant-B`, `free-flight`
        field_strength (float): the constant b of `constant-B`, B = (0, 0, b)

    Raises:
        ConfigurationError: unknown name

    Returns:
        FieldModel
    """
    try:
        model_name = ModelName(name)
    except ValueError:
        raise ConfigurationError(
            ErrorSchema(
                error=ErrorCode.UNKNOWN_MODEL,
                extra=f"{name!r}, expected one of {[m.value for m in ModelName]}",
            )
        ) from None

    if model_name is ModelName.PAPER_SEC6:
        return _paper_sec6()
    if model_name is ModelName.CONSTANT_B:
        return _constant_b(field_strength)
    return _free_flight()
