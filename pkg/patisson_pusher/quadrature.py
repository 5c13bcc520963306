"""
This module provides Gauss-Legendre rules on [0, 1] and the averaged force along a segment.

The implicit schemes need the average of the force along the straight segment between two positions,

    ∫₀¹ F(x_from + τ(x_to − x_from)) dτ.

For a general potential it is approximated by an s-point Gauss-Legendre rule. For a potential of the
form U(x) = Û(aᵀx) it is evaluated in closed form as a difference quotient of Û.

Functions:
    - gauss_legendre_rule: The s-point rule on [0, 1] for s = 1, 2, 3.
    - minimal_stages: The smallest s that integrates the energy balance of a polynomial potential exactly.
    - average_force_quadrature: The quadrature approximation of the averaged force.
    - exact_linear_integral: The closed-form averaged force for U(x) = Û(aᵀx).
    - monomial_error: The error of a rule on a monomial, used by the validation suite.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from patisson_pusher.core import FieldModel
from patisson_pusher.errors import ConfigurationError, DomainError, ErrorCode, ErrorSchema
from patisson_pusher.types import ScalarFunction, Vec3

SUPPORTED_STAGES = (1, 2, 3)
SWITCH_EPS = 1e-8
SERIES_BAND = 1e-3


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.nodes)

    @property
    def degree(self) -> int:
        """Highest monomial degree integrated exactly."""
        return 2 * self.stages - 1

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return self.weights @ values


def _frozen(*values: float) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.flags.writeable = False
    return array


@lru_cache(maxsize=None)
def gauss_legendre_rule(s: int) -> QuadratureRule:
    """
    Return the s-point Gauss-Legendre rule mapped to [0, 1].

    Args:
        s (int): number of nodes, 1, 2 or 3

    Raises:
        ConfigurationError: s is not supported

    Returns:
        QuadratureRule
    """
    if s == 1:
        return QuadratureRule(nodes=_frozen(0.5), weights=_frozen(1.0))
    if s == 2:
        offset = math.sqrt(3.0) / 6.0
        return QuadratureRule(nodes=_frozen(0.5 - offset, 0.5 + offset), weights=_frozen(0.5, 0.5))
    if s == 3:
        offset = math.sqrt(15.0) / 10.0
        return QuadratureRule(
            nodes=_frozen(0.5 - offset, 0.5, 0.5 + offset),
            weights=_frozen(5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0),
        )
    raise ConfigurationError(
        ErrorSchema(error=ErrorCode.UNSUPPORTED_STAGES, extra=f"s={s}, expected one of {SUPPORTED_STAGES}")
    )


def minimal_stages(degree: int) -> int:
    """
    Return the smallest stage count that keeps EPGL exactly energy-preserving for a polynomial U.

    The energy balance integrates F·Δx, a polynomial of degree `degree - 1` in τ, so the rule must be
    exact for that degree: 2s − 1 ≥ degree − 1.

    Raises:
        ConfigurationError: degree is negative or needs more than three stages
    """
    if degree < 0:
        raise ConfigurationError(ErrorSchema(error=ErrorCode.INVALID_PARAMETERS, extra=f"degree={degree}"))
    s = max(1, math.ceil(degree / 2))
    if s not in SUPPORTED_STAGES:
        raise ConfigurationError(
            ErrorSchema(error=ErrorCode.UNSUPPORTED_STAGES, extra=f"degree {degree} needs s={s}")
        )
    return s


def average_force_quadrature(model: FieldModel, x_from: Vec3, x_to: Vec3, rule: QuadratureRule) -> Vec3:
    """
    Return Σᵢ bᵢ F(x_from + cᵢ(x_to − x_from)).

    A vectorized model evaluates all nodes in one call. The nodes are evaluated one by one for other models
    and whenever the batched call fails, so that the failing node can be named.

    Raises:
        DomainError: the force is not defined at one of the nodes; the node index is attached
    """
    delta = x_to - x_from
    if model.vectorized:
        try:
            forces = model.F_eval(x_from + rule.nodes[:, None] * delta)
        except DomainError:
            forces = None
        if forces is not None and np.all(np.isfinite(forces)):
            return rule.integrate(forces)

    average = np.zeros(3)
    for index, (node, weight) in enumerate(zip(rule.nodes, rule.weights, strict=True)):
        try:
            average += weight * model.F(x_from + node * delta)
        except DomainError as e:
            raise DomainError(
                ErrorSchema(
                    error=ErrorCode(e.error_schema.error),
                    extra=f"quadrature node {index} (c={node}): {e.error_schema.extra}",
                )
            ) from e
    return average


def _mean_derivative(derivative: ScalarFunction, xi_from: float, delta: float) -> float:
    rule = gauss_legendre_rule(3)
    return float(sum(w * derivative(xi_from + c * delta) for c, w in zip(rule.nodes, rule.weights)))


def exact_linear_integral(model: FieldModel, x_from: Vec3, x_to: Vec3) -> Vec3:
    """
    Return the averaged force of a potential U(x) = Û(aᵀx) in closed form.

    With ξ₀ = aᵀx_from and δ = aᵀx_to − ξ₀ the result is −a (Û(ξ₀ + δ) − Û(ξ₀)) / δ. Close to δ = 0 the
    difference quotient loses digits to cancellation, so two limit forms take over:

    - |δ| < 1e-8·(1 + |ξ₀|): −a Û′(ξ₀ + δ/2);
    - |δ| < 1e-3·(1 + |ξ₀|): −a times the 3-point Gauss-Legendre mean of Û′ over [ξ₀, ξ₀ + δ].

    Each form is unchanged under exchanging the endpoints, which keeps the step map symmetric.

    Raises:
        ConfigurationError: the model has no linear direction

    Returns:
        Vec3
    """
    if model.linear_direction is None or model.Uhat_eval is None or model.Uhat_prime is None:
        raise ConfigurationError(
            ErrorSchema(error=ErrorCode.MISSING_LINEAR_DIRECTION, extra=f"model={model.name!r}")
        )
    a = model.linear_direction
    xi_from = float(a @ x_from)
    xi_to = float(a @ x_to)
    delta = xi_to - xi_from
    scale = 1.0 + abs(xi_from)

    if abs(delta) < SWITCH_EPS * scale:
        slope = model.Uhat_prime(0.5 * (xi_from + xi_to))
    elif abs(delta) < SERIES_BAND * scale:
        slope = _mean_derivative(model.Uhat_prime, xi_from, delta)
    else:
        slope = (model.Uhat_eval(xi_to) - model.Uhat_eval(xi_from)) / delta

    result = -a * slope
    if not np.all(np.isfinite(result)):
        raise DomainError(
            ErrorSchema(
                error=ErrorCode.NON_FINITE, extra=f"Û of model {model.name!r} on [{xi_from}, {xi_to}]"
            )
        )
    return result


def monomial_error(rule: QuadratureRule, k: int) -> float:
    """Return |Σᵢ bᵢcᵢᵏ − 1/(k + 1)|, the error of the rule on tᵏ over [0, 1]."""
    return abs(float(rule.integrate(rule.nodes**k)) - 1.0 / (k + 1))
