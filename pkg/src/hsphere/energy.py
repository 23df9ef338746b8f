"""Discrete perturbed alpha-energy, its gradient and its Hessian.

For a P1 map u (one row per vertex, K columns) on a DomainMesh the functional
is

    E(u) = 1/2 sum_T area_T (tau + |grad u|_T^2)^alpha
           + lam * tau^(alpha - 1) * sum_T 1/2 e1^T c(ubar_T) e2

with e1, e2 the image edge vectors of T and ubar_T the image barycenter.
The omega term is the exact pullback of omega over the flat image triangle
when the coefficients are constant on it.

Derivatives are taken exactly in the ambient coordinates first; the
gradient is the projected, mass-normalized residual and the Hessian is the
ambient Hessian plus the Weingarten correction that accounts for the
constraint u in N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DomainMesh
from .target import TargetManifold, TwoFormField, zero_form

# barycenter / edge coordinates of a triangle in terms of its corners
_LOCAL = np.array([[1 / 3, 1 / 3, 1 / 3], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class FunctionalParams:
    """alpha >= 1, lam >= 0 (form scaling), tau in (0, 1]."""

    alpha: float = 1.0
    lam: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not self.lam >= 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")

    @property
    def omega_weight(self) -> float:
        return self.lam * self.tau ** (self.alpha - 1.0)

    def replace(self, **kw) -> "FunctionalParams":
        d = {"alpha": self.alpha, "lam": self.lam, "tau": self.tau}
        d.update(kw)
        return FunctionalParams(**d)


def as_state(target: TargetManifold, u, mesh: DomainMesh | None = None) -> np.ndarray:
    """Validate a MapState: (V, K) float array with every row on the target."""
    u = np.array(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != target.ambient_dim:
        raise ValueError(f"map must have shape (V, {target.ambient_dim}), got {u.shape}")
    if mesh is not None and len(u) != mesh.n_vertices:
        raise ValueError(f"map has {len(u)} rows, mesh has {mesh.n_vertices} vertices")
    target.check_on(u)
    return u


def constant_map(mesh: DomainMesh, point) -> np.ndarray:
    return np.tile(np.asarray(point, float), (mesh.n_vertices, 1))


def _triangle_geometry(mesh, u):
    p = u[mesh.triangles]  # (T, 3, K)
    ubar = p.mean(axis=1)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return ubar, e1, e2


def _scatter(mesh, local, K):
    """Sum per-corner contributions (T, 3, K) into vertex rows (V, K)."""
    out = np.zeros((mesh.n_vertices, K))
    np.add.at(out, mesh.triangles, local)
    return out


def dirichlet(mesh: DomainMesh, u) -> float:
    return mesh.dirichlet(u)


def alpha_energy(mesh: DomainMesh, u, params: FunctionalParams) -> float:
    s = mesh.energy_density(u)
    return 0.5 * float(np.dot(mesh.tri_area, (params.tau + s) ** params.alpha))


def omega_term(mesh: DomainMesh, u, form: TwoFormField) -> float:
    """Discrete pullback integral of omega (orientation-sensitive)."""
    if form.is_zero:
        return 0.0
    ubar, e1, e2 = _triangle_geometry(mesh, np.asarray(u, float))
    c = form.omega(ubar)
    return 0.5 * float(np.sum(np.einsum("ti,tij,tj->t", e1, c, e2)))


def total_energy(mesh: DomainMesh, u, form: TwoFormField, params: FunctionalParams) -> float:
    val = alpha_energy(mesh, u, params)
    w = params.omega_weight
    if w != 0.0 and not form.is_zero:
        val += w * omega_term(mesh, u, form)
    return val


class Functional:
    """E^{lam omega}_alpha on a fixed mesh and target."""

    def __init__(self, mesh: DomainMesh, target: TargetManifold, form: TwoFormField | None = None,
                 params: FunctionalParams | None = None):
        self.mesh = mesh
        self.target = target
        self.form = zero_form(target.ambient_dim) if form is None else form
        if self.form.K != target.ambient_dim:
            raise ValueError(f"form lives in R^{self.form.K}, target in R^{target.ambient_dim}")
        self.params = FunctionalParams() if params is None else params
        self.K = target.ambient_dim

    def with_params(self, **kw) -> "Functional":
        return Functional(self.mesh, self.target, self.form, self.params.replace(**kw))

    @property
    def _has_omega(self) -> bool:
        return self.params.omega_weight != 0.0 and not self.form.is_zero

    # values
    def energy(self, u) -> float:
        return total_energy(self.mesh, u, self.form, self.params)

    def parts(self, u) -> dict:
        a = alpha_energy(self.mesh, u, self.params)
        o = omega_term(self.mesh, u, self.form)
        return {
            "alpha_energy": a,
            "omega_term": o,
            "dirichlet": self.mesh.dirichlet(u),
            "total": a + (self.params.omega_weight * o if self._has_omega else 0.0),
        }

    # first derivatives
    def ambient_gradient(self, u) -> np.ndarray:
        """Euclidean partial derivatives dE/du, shape (V, K)."""
        mesh, p = self.mesh, self.params
        u = np.asarray(u, float)
        G = mesh.gradients(u)
        s = np.einsum("tak,tak->t", G, G)
        c = mesh.tri_area * p.alpha * (p.tau + s) ** (p.alpha - 1.0)
        local = c[:, None, None] * np.einsum("tav,tak->tvk", mesh.tri_grad, G)
        if self._has_omega:
            local = local + p.omega_weight * self._omega_local_gradient(u)
        return _scatter(mesh, local, self.K)

    def _omega_local_gradient(self, u):
        ubar, e1, e2 = _triangle_geometry(self.mesh, u)
        c = self.form.omega(ubar)
        dc = self.form.d_omega(ubar)
        g_bar = 0.5 * np.einsum("ti,tijk,tj->tk", e1, dc, e2)
        g_e1 = 0.5 * np.einsum("tij,tj->ti", c, e2)
        g_e2 = 0.5 * np.einsum("tij,ti->tj", c, e1)
        return np.stack(
            [g_bar / 3.0 - g_e1 - g_e2, g_bar / 3.0 + g_e1, g_bar / 3.0 + g_e2], axis=1
        )

    def gradient(self, u) -> np.ndarray:
        """Tangent field G with <G, V>_mass = dE(u)[V] for tangent V."""
        e = self.ambient_gradient(u)
        return self.target.tangent_project(u, e, check=False) / self.mesh.vertex_area[:, None]

    def mass_inner(self, V, W) -> float:
        return float(np.sum(self.mesh.vertex_area[:, None] * V * W))

    def mass_norm(self, V) -> float:
        return float(np.sqrt(max(self.mass_inner(V, V), 0.0)))

    def grad_norm(self, u) -> float:
        return self.mass_norm(self.gradient(u))

    def retract(self, u, V) -> np.ndarray:
        return self.target.project_point(np.asarray(u) + V)

    # second derivatives
    def ambient_hessian(self, u) -> sp.csr_matrix:
        """Sparse (V K) x (V K) Hessian of E in ambient coordinates, row index v*K + k."""
        mesh, p, K = self.mesh, self.params, self.K
        u = np.asarray(u, float)
        D = mesh.tri_grad
        G = mesh.gradients(u)
        s = np.einsum("tak,tak->t", G, G)
        ts = p.tau + s
        c = mesh.tri_area * p.alpha * ts ** (p.alpha - 1.0)
        S = np.einsum("tav,taw->tvw", D, D)
        # local blocks indexed [t, v, k, w, l]
        blk = c[:, None, None, None, None] * np.einsum("tvw,kl->tvkwl", S, np.eye(K))
        if p.alpha != 1.0:
            q = np.einsum("tav,tak->tvk", D, G)
            c2 = 2.0 * mesh.tri_area * p.alpha * (p.alpha - 1.0) * ts ** (p.alpha - 2.0)
            blk = blk + c2[:, None, None, None, None] * np.einsum("tvk,twl->tvkwl", q, q)
        if self._has_omega:
            blk = blk + p.omega_weight * self._omega_local_hessian(u)
        T = mesh.n_triangles
        idx = (mesh.triangles[:, :, None] * K + np.arange(K)).reshape(T, 3 * K)
        rows = np.repeat(idx, 3 * K, axis=1).reshape(-1)
        cols = np.tile(idx, (1, 3 * K)).reshape(-1)
        n = mesh.n_vertices * K
        H = sp.coo_matrix((blk.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
        H.sum_duplicates()
        return H

    def _omega_local_hessian(self, u):
        ubar, e1, e2 = _triangle_geometry(self.mesh, u)
        K = self.K
        c = self.form.omega(ubar)
        dc = self.form.d_omega(ubar)
        ddc = self.form.dd_omega(ubar)
        T = len(ubar)
        # second derivatives of f(ubar, e1, e2) = 1/2 e1^T c(ubar) e2, block [a, i, b, j]
        h = np.zeros((T, 3, K, 3, K))
        h[:, 0, :, 0, :] = 0.5 * np.einsum("ti,tijkl,tj->tkl", e1, ddc, e2)
        b01 = 0.5 * np.einsum("tijk,tj->tki", dc, e2)  # d^2 f / d ubar^k d e1^i
        b02 = 0.5 * np.einsum("ti,tijk->tkj", e1, dc)  # d^2 f / d ubar^k d e2^j
        h[:, 0, :, 1, :] = b01
        h[:, 1, :, 0, :] = np.swapaxes(b01, 1, 2)
        h[:, 0, :, 2, :] = b02
        h[:, 2, :, 0, :] = np.swapaxes(b02, 1, 2)
        h[:, 1, :, 2, :] = 0.5 * c
        h[:, 2, :, 1, :] = 0.5 * np.swapaxes(c, 1, 2)
        return np.einsum("av,taibj,bw->tviwj", _LOCAL, h, _LOCAL)

    def weingarten_blocks(self, u) -> np.ndarray:
        """Per-vertex K x K matrices S_v with <e_v, A(X, Y)> = X^T S_v Y."""
        e = self.ambient_gradient(u)
        return self.target.weingarten(u, e, check=False)

    def constraint_hessian(self, u) -> sp.csr_matrix:
        """Ambient Hessian plus the block-diagonal Weingarten term."""
        H = self.ambient_hessian(u)
        W = self.weingarten_blocks(u)
        return (H + sp.block_diag(list(W), format="csr")).tocsr()

    def hessian_apply(self, u, V) -> np.ndarray:
        """Tangent field L(V) with <L(V), W>_mass = second variation at u along (V, W)."""
        u = np.asarray(u, float)
        V = np.asarray(V, float)
        HV = (self.ambient_hessian(u) @ V.reshape(-1)).reshape(V.shape)
        W = self.weingarten_blocks(u)
        HV = HV + np.einsum("vij,vj->vi", W, V)
        return self.target.tangent_project(u, HV, check=False) / self.mesh.vertex_area[:, None]

    def tangent_basis(self, u) -> sp.csr_matrix:
        """Sparse (V K) x (V n) matrix of per-vertex orthonormal tangent frames."""
        F = self.target.tangent_frame(u, check=False)  # (V, K, n)
        return sp.block_diag(list(F), format="csr")

    def reduced_hessian(self, u):
        """Second variation and mass matrix in tangent-frame coordinates."""
        T = self.tangent_basis(u)
        A = (T.T @ self.constraint_hessian(u) @ T).tocsr()
        A = 0.5 * (A + A.T)
        n = self.target.dim
        M = sp.diags(np.repeat(self.mesh.vertex_area, n)).tocsr()
        return A, M, T


# functional-style entry points


def gradient(mesh, u, form, params, target) -> np.ndarray:
    return Functional(mesh, target, form, params).gradient(u)


def hessian_apply(mesh, u, form, params, target, V) -> np.ndarray:
    return Functional(mesh, target, form, params).hessian_apply(u, V)


def random_tangent_field(functional: Functional, u, rng: np.random.Generator, smooth: bool = True):
    """Random tangent field; smooth fields are restrictions of a random affine ambient field."""
    K = functional.K
    if smooth:
        Amat = rng.standard_normal((K, 3))
        b = rng.standard_normal(K)
        V = functional.mesh.vertices @ Amat.T + b
    else:
        V = rng.standard_normal((len(u), K))
    return functional.target.tangent_project(u, V, check=False)


def fd_directional_derivative(functional: Functional, u, V, eps: float = 1e-5) -> float:
    """Central difference of E along the retraction curve t -> project(u + tV)."""
    ep = functional.energy(functional.retract(u, eps * V))
    em = functional.energy(functional.retract(u, -eps * V))
    return (ep - em) / (2 * eps)


def fd_hessian_apply(functional: Functional, u, V, eps: float = 1e-5) -> np.ndarray:
    """Projected central difference of the gradient field along the retraction curve."""
    gp = functional.gradient(functional.retract(u, eps * V))
    gm = functional.gradient(functional.retract(u, -eps * V))
    return functional.target.tangent_project(u, (gp - gm) / (2 * eps), check=False)
