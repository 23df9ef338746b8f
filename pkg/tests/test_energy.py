import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import build_target, random_state
from hsphere.energy import (Functional, FunctionalParams, alpha_energy, constant_map, fd_directional_derivative,
                            fd_hessian_apply, omega_term, random_tangent_field)
from hsphere.mesh import icosphere
from hsphere.target import cmc_form, cosine_form, make_target, volume_form


def polyhedron_volume(u, tris):
    p = u[tris]
    return float(np.einsum("ti,ti->t", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def test_params_validated():
    for bad in ({"alpha": 0.9}, {"lam": -1.0}, {"tau": 0.0}, {"tau": 1.5}):
        with pytest.raises(ValueError):
            FunctionalParams(**bad)
    assert FunctionalParams(alpha=1.5, tau=0.25).omega_weight == pytest.approx(0.5)


def test_constant_map_energy_is_half_area_tau_alpha():
    m = icosphere(2)
    T = make_target("round_sphere", n=3)
    f = Functional(m, T, params=FunctionalParams(alpha=1.3, tau=0.5))
    u = constant_map(m, np.eye(4)[0])
    assert f.energy(u) == pytest.approx(0.5 * m.area * 0.5**1.3)
    assert f.grad_norm(u) < 1e-14


def test_volume_form_term_is_enclosed_volume(rng):
    m = icosphere(3)
    u = m.vertices * np.array([1.3, 0.9, 1.1]) + 0.02 * rng.standard_normal((m.n_vertices, 3))
    assert omega_term(m, u, volume_form(3, 1.0)) == pytest.approx(polyhedron_volume(u, m.triangles), rel=1e-13)


def test_identity_alpha_energy_converges_to_closed_form():
    alpha = 1.25
    errs = []
    for s in (2, 3, 4):
        m = icosphere(s)
        errs.append(abs(alpha_energy(m, m.vertices, FunctionalParams(alpha=alpha))
                        - oracles.identity_alpha_energy(alpha)))
    assert errs[-1] / oracles.identity_alpha_energy(alpha) < 5e-3
    assert math.log2(errs[1] / errs[2]) > 1.8


def test_cmc_energy_stationary_near_unit_radius():
    m = icosphere(4)
    f = Functional(m, make_target("flat_euclidean", K=3), cmc_form(3, 1.0))
    R = np.linspace(0.9, 1.1, 41)
    E = [f.energy(r * m.vertices) for r in R]
    # continuum: 1/2 Area + 4 pi R^2 - 8 pi R^3 / 3, stationary at R = 1
    assert abs(R[int(np.argmin(np.gradient(E) ** 2))] - 1.0) <= 0.01


@pytest.mark.parametrize("name", ["S2", "ellipsoid", "T3"])
def test_gradient_is_tangent_and_matches_fd(name, rng):
    m = icosphere(2)
    T = build_target(name)
    f = Functional(m, T, cosine_form(T.ambient_dim, 0.5), FunctionalParams(alpha=1.2, lam=0.8))
    u = random_state(m, T, rng)
    g = f.gradient(u)
    np.testing.assert_allclose(T.tangent_project(u, g), g, atol=1e-12)
    V = random_tangent_field(f, u, rng)
    assert f.mass_inner(g, V) == pytest.approx(fd_directional_derivative(f, u, V), rel=1e-6, abs=1e-9)


def test_hessian_matches_fd_of_gradient(rng):
    m = icosphere(2)
    T = make_target("round_sphere", n=3)
    f = Functional(m, T, cosine_form(4, 0.4), FunctionalParams(alpha=1.1))
    u = random_state(m, T, rng)
    V = random_tangent_field(f, u, rng)
    H, Hf = f.hessian_apply(u, V), fd_hessian_apply(f, u, V)
    assert np.linalg.norm(H - Hf) <= 1e-6 * np.linalg.norm(Hf)


def test_form_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        Functional(icosphere(1), make_target("round_sphere", n=3), volume_form(3))


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 2.0), st.floats(1.0, 2.0), st.integers(0, 2**31))
def test_alpha_energy_nondecreasing_in_alpha(a1, a2, seed):
    # with tau = 1 the integrand (1 + s)^alpha grows with alpha
    lo, hi = sorted((a1, a2))
    m = icosphere(1)
    u = random_state(m, make_target("round_sphere", n=2), np.random.default_rng(seed))
    assert alpha_energy(m, u, FunctionalParams(alpha=lo)) <= alpha_energy(m, u, FunctionalParams(alpha=hi))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_energy_invariant_under_target_rotation(seed):
    rng = np.random.default_rng(seed)
    m = icosphere(1)
    T = make_target("round_sphere", n=2)
    u = random_state(m, T, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    f = Functional(m, T, params=FunctionalParams(alpha=1.4))
    assert f.energy(u @ Q.T) == pytest.approx(f.energy(u), rel=1e-12)
