import dataclasses
import math

import numpy as np
import pytest

from patisson_pusher.core import (
    FieldModel,
    ParticleState,
    SkewMatrix3,
    axial_rotation,
    btilde_apply,
    builtin_model,
    consistency_check,
    field_rotation,
    linear_potential_model,
    vec3,
)
from patisson_pusher.errors import ConfigurationError, DomainError, ErrorCode, ErrorSchema

PAPER_X = vec3(0.0, 1.0, 0.1)


@pytest.fixture(scope="module")
def paper_model() -> FieldModel:
    return builtin_model("paper-sec6")


def test_btilde_apply_unit_vectors():
    assert np.array_equal(btilde_apply(vec3(0, 0, 1), vec3(1, 0, 0)), [0.0, -1.0, 0.0])


def test_btilde_apply_zero_field():
    assert np.array_equal(btilde_apply(np.zeros(3), vec3(3, -2, 5)), np.zeros(3))


def test_btilde_apply_matches_component_formula():
    rng = np.random.default_rng(7)
    for _ in range(200):
        B, w = rng.normal(size=3), rng.normal(size=3)
        expected = np.array(
            [
                B[2] * w[1] - B[1] * w[2],
                -B[2] * w[0] + B[0] * w[2],
                B[1] * w[0] - B[0] * w[1],
            ]
        )
        result = btilde_apply(B, w)
        assert np.allclose(result, expected, rtol=1e-15, atol=1e-15)
        assert abs(w @ result) <= 1e-14 * (np.linalg.norm(w) ** 2 * np.linalg.norm(B) + 1.0)


def test_skew_matrix_is_skew_and_applies_cross_product():
    rng = np.random.default_rng(11)
    b = rng.normal(size=3)
    w = rng.normal(size=3)
    matrix = SkewMatrix3.from_vector(b).as_matrix()
    assert np.array_equal(matrix.T, -matrix)
    assert np.allclose(matrix @ w, np.cross(w, b), rtol=1e-15, atol=1e-15)
    assert np.allclose(SkewMatrix3.from_vector(b).apply(w), np.cross(w, b), rtol=1e-15, atol=1e-15)


def test_rotation_generators():
    axial = axial_rotation()
    assert np.array_equal(axial.matrix.T, -axial.matrix)
    assert np.array_equal(axial.apply(vec3(1, 2, 3)), [2.0, -1.0, 0.0])
    assert np.array_equal(field_rotation(vec3(0, 0, 2)).apply(vec3(1, 0, 0)), [0.0, -2.0, 0.0])


def test_vec3_rejects_non_finite():
    with pytest.raises(DomainError) as e:
        vec3(0.0, math.nan, 1.0)
    assert e.value.error_schema.error == ErrorCode.NON_FINITE.value


def test_particle_state_from_components():
    state = ParticleState.from_components((0, 1, 0.1), (0.09, 0.05, 0.2), t=2)
    assert state.x.dtype == np.float64
    assert state.t == 2.0
    assert np.array_equal(state.v, [0.09, 0.05, 0.2])


def test_paper_model_values(paper_model: FieldModel):
    assert paper_model.U(PAPER_X) == pytest.approx(0.01, abs=1e-18)
    assert np.allclose(paper_model.F(PAPER_X), [0.0, 0.01, 0.0], rtol=0, atol=1e-18)
    assert np.allclose(paper_model.B(PAPER_X), [0.0, 0.0, 1.0], rtol=0, atol=1e-16)
    assert np.allclose(paper_model.A(PAPER_X), [-1.0 / 3.0, 0.0, 0.0], rtol=0, atol=1e-16)


def test_paper_model_force_is_orthogonal_to_rotation(paper_model: FieldModel):
    rng = np.random.default_rng(3)
    S = axial_rotation()
    for _ in range(100):
        x = rng.uniform(-2, 2, size=3)
        force = paper_model.F(x)
        assert abs(S.apply(x) @ force) <= 1e-14 * np.linalg.norm(x) * np.linalg.norm(force)


def test_paper_model_is_singular_on_axis(paper_model: FieldModel):
    with pytest.raises(DomainError) as e:
        paper_model.U(vec3(0.0, 0.0, 1.0))
    assert e.value.error_schema.error == ErrorCode.DOMAIN_ERROR.value


def test_free_flight_and_constant_field():
    free = builtin_model("free-flight")
    x = vec3(0.3, -1.0, 2.0)
    assert np.array_equal(free.F(x), np.zeros(3))
    assert np.array_equal(free.B(x), np.zeros(3))
    assert free.U(x) == 0.0

    constant = builtin_model("constant-B", field_strength=2.0)
    assert np.array_equal(constant.B(x), [0.0, 0.0, 2.0])
    assert constant.has_linear_direction
    assert constant.has_vector_potential


def test_unknown_model():
    with pytest.raises(ConfigurationError) as e:
        builtin_model("dipole")
    assert e.value.error_schema.error == ErrorCode.UNKNOWN_MODEL.value
    assert "dipole" in str(e.value)


def test_linear_direction_requires_profile():
    with pytest.raises(ConfigurationError):
        FieldModel(
            name="incomplete",
            B_eval=np.zeros_like,
            U_eval=lambda x: 0.0,
            F_eval=np.zeros_like,
            linear_direction=vec3(1, 0, 0),
        )


def test_missing_vector_potential():
    model = linear_potential_model("slope", (1, 0, 0), lambda xi: xi, lambda xi: 1.0)
    with pytest.raises(ConfigurationError) as e:
        model.A(PAPER_X)
    assert e.value.error_schema.error == ErrorCode.MISSING_VECTOR_POTENTIAL.value


def test_consistency_check_paper_model(paper_model: FieldModel):
    report = consistency_check(paper_model, [PAPER_X], fd_step=1e-5)
    assert report.force_residual < 1e-6
    assert report.curl_residual is not None and report.curl_residual < 1e-6
    assert report.passed


def test_consistency_check_zero_potential():
    report = consistency_check(builtin_model("free-flight"), [PAPER_X, vec3(1, 2, 3)])
    assert report.force_residual == 0.0
    assert report.curl_residual == 0.0
    assert report.passed


def test_consistency_check_linear_potential():
    model = linear_potential_model("wave", (0.6, 0.0, 0.8), math.sin, math.cos)
    report = consistency_check(model, [PAPER_X, vec3(-0.4, 0.2, 1.5)])
    assert report.curl_residual is None
    assert report.passed


def test_consistency_check_detects_wrong_force_sign(paper_model: FieldModel):
    wrong = dataclasses.replace(paper_model, name="wrong-sign", F_eval=lambda x: -paper_model.F_eval(x))
    report = consistency_check(wrong, [PAPER_X])
    assert not report.passed
    assert report.force_residual == pytest.approx(2 * 0.01, abs=1e-6)


def test_consistency_check_probe_on_axis(paper_model: FieldModel):
    with pytest.raises(DomainError) as e:
        consistency_check(paper_model, [PAPER_X, vec3(0.0, 0.0, 0.5)])
    assert "probe 1" in str(e.value)


def test_consistency_check_rejects_step():
    with pytest.raises(ConfigurationError):
        consistency_check(builtin_model("free-flight"), [PAPER_X], fd_step=0.0)


def test_error_schema_describe():
    schema = ErrorSchema(error=ErrorCode.UNKNOWN_METHOD, extra="'rk4'")
    assert schema.describe() == f"{ErrorCode.UNKNOWN_METHOD.value}: 'rk4'"
    assert ErrorSchema(error=ErrorCode.DIVERGENCE).describe() == ErrorCode.DIVERGENCE.value
