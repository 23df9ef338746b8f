import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TARGET_SPECS, build_target
from hsphere.errors import OutsideTubularNeighborhood, PointOffManifold
from hsphere.target import (cmc_form, cosine_form, expression_form, linear_form, make_form, make_target,
                            volume_form, zero_form)


@pytest.mark.parametrize("name", list(TARGET_SPECS))
def test_projection_lands_on_target_and_is_idempotent(name, rng):
    T = build_target(name)
    y = T.sample(50, rng) + 0.01 * rng.standard_normal((50, T.ambient_dim))
    p = T.project_point(y)
    assert np.all(T.contains(p))
    np.testing.assert_allclose(T.project_point(p), p, atol=1e-12)


@pytest.mark.parametrize("name", list(TARGET_SPECS))
def test_tangent_projector_is_symmetric_idempotent(name, rng):
    T = build_target(name)
    y = T.sample(5, rng)
    P = T.tangent_projector(y)
    np.testing.assert_allclose(P, np.swapaxes(P, 1, 2), atol=1e-13)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    assert np.allclose(np.trace(P, axis1=1, axis2=2), T.dim)


def test_sphere_curvature_matches_radius():
    S = make_target("round_sphere", n=2, radius=2.0)
    y, X, Y = np.array([0, 0, 2.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert S.curvature(y, X, Y, X, Y) == pytest.approx(0.25)
    S3 = make_target("round_sphere", n=3)
    # Ric = (n - 1) g on the unit n-sphere
    assert S3.ricci(np.eye(4)[3], np.eye(4)[0], np.eye(4)[0]) == pytest.approx(2.0)


def test_ellipsoid_gauss_curvature_at_axis_tip():
    a, b, c = 1.0, 1.2, 1.5
    E = make_target("ellipsoid", semiaxes=[a, b, c])
    X, Y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert E.curvature(np.array([0, 0, c]), X, Y, X, Y) == pytest.approx(c**2 / (a**2 * b**2))


def test_flat_torus_is_flat(rng):
    T = make_target("flat_torus", n=3)
    y = T.sample(1, rng)[0]
    F = T.tangent_frame(y)
    for i in range(3):
        for j in range(3):
            assert abs(T.curvature(y, F[:, i], F[:, j], F[:, i], F[:, j])) < 1e-12


def test_off_manifold_and_far_points_raise():
    S = make_target("round_sphere")
    with pytest.raises(PointOffManifold):
        S.tangent_projector(np.array([0, 0, 3.0]))
    with pytest.raises(OutsideTubularNeighborhood):
        S.project_point(np.zeros(3))
    with pytest.raises(ValueError):
        make_target("round_sphere", n=7)
    with pytest.raises(ValueError):
        make_target("klein_bottle")


def test_volume_and_cmc_forms_have_constant_H():
    y = np.array([0.1, -0.4, 0.3])
    assert volume_form(3, 0.8).H_tensor(y)[0, 1, 2] == pytest.approx(0.8)
    assert cmc_form(3, 1.0).H_tensor(y)[0, 1, 2] == pytest.approx(-2.0)


@pytest.mark.parametrize("form", [cosine_form(4, 0.7), volume_form(4, 1.3), zero_form(4)])
def test_form_derivatives_match_finite_differences(form, rng):
    y = rng.standard_normal(4)
    h = 1e-6
    fd = np.stack([(form.omega(y + h * e) - form.omega(y - h * e)) / (2 * h) for e in np.eye(4)], axis=-1)
    np.testing.assert_allclose(form.d_omega(y), fd, atol=1e-8)
    fd2 = np.stack([(form.d_omega(y + h * e) - form.d_omega(y - h * e)) / (2 * h) for e in np.eye(4)], axis=-1)
    np.testing.assert_allclose(form.dd_omega(y), fd2, atol=1e-7)


def test_expression_form_matches_hand_written_linear_form():
    lin = np.zeros((3, 3, 3))
    lin[0, 1, 2] = 0.5
    ref = linear_form(3, None, lin)
    ex = expression_form(3, {"0,1": "0.5*y2"})
    y = np.array([0.3, 0.2, -0.7])
    np.testing.assert_allclose(ex.omega(y), ref.omega(y))
    np.testing.assert_allclose(ex.H_tensor(y), ref.H_tensor(y))


def test_make_form_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_form("spiral", 3)
    assert make_form("zero", 3).is_zero


coords = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=3, max_size=3), st.floats(0.1, 3))
def test_H_tensor_antisymmetric_in_lower_indices(y, amp):
    H = cosine_form(3, amp).H_tensor(np.array(y))
    np.testing.assert_allclose(H, -np.swapaxes(H, -1, -2), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=4, max_size=4))
def test_form_coefficients_antisymmetric(y):
    C = cosine_form(4, 1.1).omega(np.array(y))
    np.testing.assert_allclose(C, -C.T, atol=0)


def test_H_tensor_matches_explicit_cyclic_sum(rng):
    f = cosine_form(4, 0.9)
    y = rng.standard_normal(4)
    dc = f.d_omega(y)
    ref = np.zeros((4, 4, 4))
    for k in range(4):
        for i in range(4):
            for j in range(4):
                ref[k, i, j] = dc[i, j, k] + dc[j, k, i] + dc[k, i, j]
    np.testing.assert_allclose(f.H_tensor(y), ref, atol=1e-15)


def test_dH_tensor_is_derivative_of_H(rng):
    f = cosine_form(3, 1.2)
    y = rng.standard_normal(3)
    h = 1e-6
    fd = np.stack([(f.H_tensor(y + h * e) - f.H_tensor(y - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    np.testing.assert_allclose(f.dH_tensor(y), fd, atol=1e-8)
