import dataclasses
import math

import numpy as np
import pytest

from patisson_pusher.core import FieldModel, builtin_model, linear_potential_model, vec3
from patisson_pusher.errors import ConfigurationError, DomainError, ErrorCode
from patisson_pusher.quadrature import (
    SERIES_BAND,
    SWITCH_EPS,
    average_force_quadrature,
    exact_linear_integral,
    gauss_legendre_rule,
    minimal_stages,
    monomial_error,
)

STAGES = (1, 2, 3)
PROFILES = {
    "square": (lambda xi: xi**2, lambda xi: 2 * xi),
    "quartic": (lambda xi: xi**4, lambda xi: 4 * xi**3),
    "wave": (
        lambda xi: math.sin(2 * xi) + 0.3 * math.cos(xi),
        lambda xi: 2 * math.cos(2 * xi) - 0.3 * math.sin(xi),
    ),
}


def _composite_average(
    model: FieldModel, x_from: np.ndarray, x_to: np.ndarray, panels: int = 64
) -> np.ndarray:
    """∫₀¹ F(x_from + τ(x_to − x_from)) dτ by a composite 3-point Gauss-Legendre rule."""
    nodes, weights = np.polynomial.legendre.leggauss(3)
    total = np.zeros(3)
    for panel in range(panels):
        lower = panel / panels
        for node, weight in zip(nodes, weights):
            tau = lower + (node + 1) / (2 * panels)
            total += weight / (2 * panels) * model.F(x_from + tau * (x_to - x_from))
    return total


@pytest.mark.parametrize("s", STAGES)
def test_rule_matches_legendre_roots(s: int):
    rule = gauss_legendre_rule(s)
    nodes, weights = np.polynomial.legendre.leggauss(s)
    assert rule.stages == s
    assert np.allclose(rule.nodes, (nodes + 1) / 2, rtol=0, atol=1e-15)
    assert np.allclose(rule.weights, weights / 2, rtol=0, atol=1e-15)


def test_rule_closed_forms():
    assert np.array_equal(gauss_legendre_rule(1).nodes, [0.5])
    assert np.array_equal(gauss_legendre_rule(1).weights, [1.0])
    offset = math.sqrt(3) / 6
    assert np.allclose(gauss_legendre_rule(2).nodes, [0.5 - offset, 0.5 + offset], atol=1e-16)
    assert np.allclose(gauss_legendre_rule(3).weights, [5 / 18, 4 / 9, 5 / 18], atol=1e-16)


@pytest.mark.parametrize("s", STAGES)
def test_rule_weights_and_symmetry(s: int):
    rule = gauss_legendre_rule(s)
    assert abs(rule.weights.sum() - 1.0) <= 1e-15
    assert np.all(rule.weights > 0)
    assert np.all((rule.nodes > 0) & (rule.nodes < 1))
    assert np.all(np.abs(rule.nodes + rule.nodes[::-1] - 1.0) <= 1e-15)


@pytest.mark.parametrize("s", STAGES)
def test_monomial_exactness(s: int):
    rule = gauss_legendre_rule(s)
    for k in range(2 * s):
        assert monomial_error(rule, k) <= 1e-14
    assert monomial_error(rule, 2 * s) > 1e-6


def test_rule_is_read_only():
    with pytest.raises(ValueError):
        gauss_legendre_rule(2).nodes[0] = 0.0


@pytest.mark.parametrize("s", [0, 4, -1])
def test_unsupported_stages(s: int):
    with pytest.raises(ConfigurationError) as e:
        gauss_legendre_rule(s)
    assert e.value.error_schema.error == ErrorCode.UNSUPPORTED_STAGES.value


def test_minimal_stages():
    assert [minimal_stages(n) for n in range(7)] == [1, 1, 1, 2, 2, 3, 3]
    with pytest.raises(ConfigurationError):
        minimal_stages(7)
    with pytest.raises(ConfigurationError):
        minimal_stages(-1)


@pytest.mark.parametrize("s", STAGES)
def test_average_force_on_degenerate_segment(s: int):
    model = builtin_model("paper-sec6")
    x = vec3(0.0, 1.0, 0.1)
    result = average_force_quadrature(model, x, x, gauss_legendre_rule(s))
    assert np.allclose(result, model.F(x), rtol=1e-15, atol=0)


def test_average_force_free_flight():
    result = average_force_quadrature(
        builtin_model("free-flight"), vec3(0, 1, 0.1), vec3(5, -3, 2), gauss_legendre_rule(3)
    )
    assert np.array_equal(result, np.zeros(3))


def test_average_force_against_composite_rule():
    model = builtin_model("paper-sec6")
    x_from, x_to = vec3(0.0, 1.0, 0.1), vec3(0.01, 1.001, 0.12)
    result = average_force_quadrature(model, x_from, x_to, gauss_legendre_rule(3))
    assert np.max(np.abs(result - _composite_average(model, x_from, x_to))) <= 1e-10


def test_average_force_reports_node():
    model = builtin_model("paper-sec6")
    with pytest.raises(DomainError) as e:
        average_force_quadrature(model, vec3(-1, 0, 0), vec3(1, 0, 0), gauss_legendre_rule(3))
    assert "quadrature node 1" in str(e.value)


@pytest.mark.parametrize("s", STAGES)
def test_batched_nodes_match_node_by_node(s: int):
    model = builtin_model("paper-sec6")
    x_from, x_to = vec3(0.0, 1.0, 0.1), vec3(0.3, 0.8, -0.2)
    batched = average_force_quadrature(model, x_from, x_to, gauss_legendre_rule(s))
    node_by_node = average_force_quadrature(
        dataclasses.replace(model, vectorized=False), x_from, x_to, gauss_legendre_rule(s)
    )
    assert np.allclose(batched, node_by_node, rtol=1e-14, atol=0)


def test_batched_nodes_report_non_finite_node():
    model = FieldModel(
        name="cliff",
        B_eval=np.zeros_like,
        U_eval=lambda x: np.zeros(np.shape(x)[:-1]),
        F_eval=lambda x: np.where(x[..., :1] > 0.5, np.nan, np.zeros_like(x)),
        vectorized=True,
    )
    with pytest.raises(DomainError) as e:
        average_force_quadrature(model, vec3(0, 0, 0), vec3(1, 0, 0), gauss_legendre_rule(3))
    assert e.value.error_schema.error == ErrorCode.NON_FINITE.value
    assert "quadrature node 2" in str(e.value)


def test_exact_integral_quadratic():
    model = linear_potential_model("square", (1, 0, 0), lambda xi: xi**2 / 2, lambda xi: xi)
    result = exact_linear_integral(model, vec3(0, 0, 0), vec3(1, 0, 0))
    assert np.allclose(result, [-0.5, 0.0, 0.0], rtol=0, atol=1e-16)


def test_exact_integral_quartic_matches_two_stage_rule():
    model = linear_potential_model("quartic", (0, 1, 0), *PROFILES["quartic"])
    x_from, x_to = vec3(0, 1, 0), vec3(0, 2, 0)
    result = exact_linear_integral(model, x_from, x_to)
    assert np.allclose(result, [0.0, -15.0, 0.0], rtol=0, atol=1e-14)
    two_stage = average_force_quadrature(model, x_from, x_to, gauss_legendre_rule(2))
    assert np.allclose(result, two_stage, rtol=0, atol=1e-13)


def test_exact_integral_degenerate_segment():
    model = linear_potential_model("quartic", (0, 1, 0), *PROFILES["quartic"])
    x = vec3(0, 1, 0)
    assert np.allclose(exact_linear_integral(model, x, x), [0.0, -4.0, 0.0], rtol=0, atol=1e-15)
    assert np.allclose(exact_linear_integral(model, x, x), model.F(x), rtol=0, atol=1e-15)


def test_exact_integral_requires_linear_direction():
    with pytest.raises(ConfigurationError) as e:
        exact_linear_integral(builtin_model("paper-sec6"), vec3(0, 1, 0), vec3(0, 1.1, 0))
    assert e.value.error_schema.error == ErrorCode.MISSING_LINEAR_DIRECTION.value


@pytest.mark.parametrize("profile", PROFILES)
def test_exact_integral_against_composite_rule(profile: str):
    rng = np.random.default_rng(2024)
    direction = rng.normal(size=3)
    model = linear_potential_model(profile, direction / np.linalg.norm(direction), *PROFILES[profile])
    for _ in range(1000):
        x_from = rng.uniform(-0.5, 0.5, size=3)
        x_to = x_from + rng.uniform(-0.3, 0.3, size=3) * 10.0 ** rng.integers(-9, 1)
        result = exact_linear_integral(model, x_from, x_to)
        assert np.max(np.abs(result - _composite_average(model, x_from, x_to, panels=8))) <= 1e-10


def test_exact_integral_agrees_with_three_stage_rule_for_polynomials():
    rng = np.random.default_rng(5)
    for degree in range(1, 7):
        coefficients = rng.uniform(-1, 1, size=degree + 1)
        polynomial = np.polynomial.Polynomial(coefficients)
        derivative = polynomial.deriv()
        direction = rng.normal(size=3)
        model = linear_potential_model(
            f"degree-{degree}",
            direction / np.linalg.norm(direction),
            lambda xi, p=polynomial: float(p(xi)),
            lambda xi, d=derivative: float(d(xi)),
        )
        for _ in range(200):
            x_from = rng.uniform(-0.3, 0.3, size=3)
            x_to = x_from + rng.uniform(-0.3, 0.3, size=3)
            if abs(model.linear_direction @ (x_to - x_from)) < 0.05:
                continue
            exact = exact_linear_integral(model, x_from, x_to)
            quadrature = average_force_quadrature(model, x_from, x_to, gauss_legendre_rule(3))
            assert np.max(np.abs(exact - quadrature)) <= 1e-12


@pytest.mark.parametrize("threshold", [SWITCH_EPS, SERIES_BAND])
def test_exact_integral_is_continuous_across_switches(threshold: float):
    model = linear_potential_model("wave", (1, 0, 0), *PROFILES["wave"])
    xi_from = 0.3
    switch = threshold * (1 + xi_from)
    x_from = vec3(xi_from, 0, 0)
    # the true mean slope moves by about |Û″|·gap across the switch
    gap = 1e-13
    below = exact_linear_integral(model, x_from, vec3(xi_from + switch - gap, 0, 0))
    above = exact_linear_integral(model, x_from, vec3(xi_from + switch + gap, 0, 0))
    assert np.max(np.abs(below - above)) <= 1e-10


def test_exact_integral_matches_difference_quotient_inside_series_band():
    Uhat, _ = PROFILES["wave"]
    model = linear_potential_model("wave", (1, 0, 0), *PROFILES["wave"])
    xi_from = 0.3
    xi_to = xi_from + 0.9 * SERIES_BAND * (1 + xi_from)
    series = exact_linear_integral(model, vec3(xi_from, 0, 0), vec3(xi_to, 0, 0))
    quotient = -(Uhat(xi_to) - Uhat(xi_from)) / (xi_to - xi_from)
    assert series[0] == pytest.approx(quotient, abs=1e-11)
    assert series[1] == series[2] == 0.0


def test_exact_integral_is_symmetric_in_endpoints():
    model = linear_potential_model("wave", (0, 0.6, 0.8), *PROFILES["wave"])
    x_from, x_to = vec3(0.1, 0.2, 0.3), vec3(0.4, -0.1, 0.35)
    assert np.allclose(
        exact_linear_integral(model, x_from, x_to), exact_linear_integral(model, x_to, x_from), rtol=1e-15
    )
