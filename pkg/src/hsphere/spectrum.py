"""Jacobi operator spectra: Morse index, nullity and the scalar comparison form B_omega."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import Functional
from .errors import DegenerateImmersion, EigSolverFailure, NotNearCritical, TargetNotThreeDimensional

DENSE_LIMIT = 3000


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    morse_index: int
    nullity: int
    tol_eig: float
    spectral_scale: float
    grad_norm: float | None = None
    n_unknowns: int = 0
    gauge: str = "none"
    raw_index: int | None = None
    raw_nullity: int | None = None

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "morse_index": self.morse_index,
            "nullity": self.nullity,
            "tol_eig": self.tol_eig,
            "spectral_scale": self.spectral_scale,
            "grad_norm": self.grad_norm,
            "n_unknowns": self.n_unknowns,
            "gauge": self.gauge,
            "raw_index": self.raw_index,
            "raw_nullity": self.raw_nullity,
        }


def assemble_jacobi(fun: Functional, u, crit_tol: float = 1e-4):
    """Second variation A and lumped mass M in per-vertex tangent coordinates.

    Returns (A, M, T, grad_norm) where T maps tangent coordinates to ambient
    vertex vectors.  Warns with NotNearCritical when the gradient norm
    exceeds ``crit_tol``.
    """
    gn = fun.grad_norm(u)
    if gn > crit_tol:
        warnings.warn(f"Jacobi operator evaluated at |G| = {gn:.2e}", NotNearCritical, stacklevel=2)
    A, M, T = fun.reduced_hessian(u)
    return A, M, T, gn


def _standardize(A, M):
    """B = M^{-1/2} A M^{-1/2} for diagonal M."""
    d = 1.0 / np.sqrt(M.diagonal())
    D = sp.diags(d)
    B = (D @ A @ D).tocsr()
    return 0.5 * (B + B.T), d


def _gershgorin_bounds(B):
    B = B.tocsr()
    diag = B.diagonal()
    absrow = np.asarray(abs(B).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - absrow)), float(np.max(diag + absrow))


def _orthonormal_columns(C, rtol=1e-10):
    if C is None or C.shape[1] == 0:
        return None
    Q, R = np.linalg.qr(C)
    dr = np.abs(np.diag(R))
    keep = dr > rtol * dr.max() if dr.max() > 0 else np.zeros_like(dr, dtype=bool)
    return Q[:, keep] if np.any(keep) else None


def lowest_eigenvalues(A, M, tol_rel: float = 1e-6, min_count: int = 12, max_count: int = 400,
                       deflate=None):
    """Ascending eigenvalues of the pencil (A, M) covering every value up to the nullity band.

    ``deflate`` (n x r) spans directions to exclude: the pencil is compressed
    to their M-orthogonal complement.  Dense for small problems (all
    eigenvalues); otherwise shift-invert Lanczos just below the smallest
    eigenvalue, widening the window until it reaches past +tol_eig, with
    deflated directions lifted out of the window by a rank-r penalty.
    Returns (eigenvalues, tol_eig, spectral_scale).
    """
    n = A.shape[0]
    B, d = _standardize(A, M)
    # M-orthogonality becomes plain orthogonality in the standardized coordinates
    Q = None if deflate is None else _orthonormal_columns(np.asarray(deflate) / d[:, None])
    if n <= DENSE_LIMIT:
        Bd = B.toarray()
        if Q is not None:
            Z = np.linalg.qr(Q, mode="complete")[0][:, Q.shape[1]:]
            Bd = Z.T @ Bd @ Z
        try:
            w = sla.eigh(0.5 * (Bd + Bd.T), eigvals_only=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigSolverFailure(str(exc)) from exc
        scale = float(np.max(np.abs(w))) if len(w) else 0.0
        return np.sort(w), tol_rel * scale, scale
    lo, _ = _gershgorin_bounds(B)
    try:
        lam_max = float(spla.eigsh(B, k=1, which="LA", tol=1e-4, return_eigenvectors=False)[0])
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigSolverFailure(f"largest eigenvalue search failed: {exc}") from exc
    kappa = 10.0 * max(abs(lam_max), abs(lo), 1.0)

    def nearest(k, sigma, tol):
        if Q is None:
            return spla.eigsh(B, k=k, sigma=sigma, which="LM", tol=tol, return_eigenvectors=False)
        # (B - sigma + kappa Q Q^T)^{-1} by the Woodbury identity
        lu = spla.splu((B - sigma * sp.identity(n)).tocsc())
        SQ = lu.solve(Q)
        capinv = np.linalg.inv(np.eye(Q.shape[1]) / kappa + Q.T @ SQ)

        def opinv(x):
            y = lu.solve(np.asarray(x, float))
            return y - SQ @ (capinv @ (Q.T @ y))

        Bop = spla.LinearOperator(B.shape, matvec=lambda x: B @ x + kappa * (Q @ (Q.T @ x)), dtype=float)
        Op = spla.LinearOperator(B.shape, matvec=opinv, dtype=float)
        return spla.eigsh(Bop, k=k, sigma=sigma, which="LM", tol=tol, OPinv=Op, return_eigenvectors=False)

    try:
        lam_min = float(np.min(nearest(1, lo - 1e-3 * (abs(lo) + 1.0), 1e-8)))
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigSolverFailure(f"smallest eigenvalue search failed: {exc}") from exc
    scale = max(abs(lam_max), abs(lam_min))
    tol_eig = tol_rel * scale
    sigma = lam_min - 0.05 * (abs(lam_min) + 1.0)
    k = min(min_count, n - 2)
    while True:
        try:
            w = np.sort(nearest(k, sigma, 1e-10))
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise EigSolverFailure(f"shift-invert eigensolve failed: {exc}") from exc
        if w[-1] > tol_eig or k >= min(max_count, n - 2):
            if w[-1] <= tol_eig:
                raise EigSolverFailure(f"more than {k} eigenvalues below the nullity band")
            return w, tol_eig, scale
        k = min(2 * k, max_count, n - 2)


def pencil_eigenvalues(A, M, lower_bound: float, tol_rel: float = 1e-6, min_count: int = 12,
                       max_count: int = 400):
    """Like ``lowest_eigenvalues`` for a general SPD (non-diagonal) mass matrix M.

    ``lower_bound`` must lie below the smallest eigenvalue; it places the
    first shift.  Returns (eigenvalues, tol_eig, spectral_scale).
    """
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    M = 0.5 * (M + M.T)
    if n <= DENSE_LIMIT:
        try:
            w = sla.eigh(A.toarray(), M.toarray(), eigvals_only=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigSolverFailure(str(exc)) from exc
        scale = float(np.max(np.abs(w))) if len(w) else 0.0
        return np.sort(w), tol_rel * scale, scale
    try:
        lam_max = float(spla.eigsh(A, k=1, M=M, which="LA", tol=1e-4, return_eigenvectors=False)[0])
        lam_min = float(np.min(spla.eigsh(A, k=1, M=M, sigma=lower_bound, which="LM", tol=1e-8,
                                          return_eigenvectors=False)))
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigSolverFailure(f"extreme eigenvalue search failed: {exc}") from exc
    scale = max(abs(lam_max), abs(lam_min))
    tol_eig = tol_rel * scale
    sigma = lam_min - 0.05 * (abs(lam_min) + 1.0)
    k = min(min_count, n - 2)
    while True:
        try:
            w = np.sort(spla.eigsh(A, k=k, M=M, sigma=sigma, which="LM", tol=1e-10, return_eigenvectors=False))
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise EigSolverFailure(f"shift-invert eigensolve failed: {exc}") from exc
        if w[-1] > tol_eig or k >= min(max_count, n - 2):
            if w[-1] <= tol_eig:
                raise EigSolverFailure(f"more than {k} eigenvalues below the nullity band")
            return w, tol_eig, scale
        k = min(2 * k, max_count, n - 2)


def count_spectrum(w, tol_eig):
    w = np.asarray(w)
    return int(np.sum(w < -tol_eig)), int(np.sum(np.abs(w) <= tol_eig))


def conformal_fields(fun: Functional, u) -> np.ndarray:
    """Variations du(X) for the six conformal vector fields X of the domain sphere.

    Rotations X = a x p and dilations X = b - <b, p> p with a, b coordinate
    axes.  Per-triangle differentials are averaged to the vertices (area
    weighted) and projected to T_uN.  Shape (V, K, 6).
    """
    mesh, target = fun.mesh, fun.target
    G = mesh.gradients(u)  # (T, 2, K): derivatives along the frame vectors
    p = mesh.barycenters
    wts = np.repeat(mesh.tri_area / 3.0, 3)
    out = np.zeros((mesh.n_vertices, fun.K, 6))
    for j in range(6):
        e = np.eye(3)[j % 3]
        X = np.cross(e, p) if j < 3 else e - (p @ e)[:, None] * p
        # frame components, rescaled to the triangle's unit-speed metric
        Xf = np.einsum("tia,ti->ta", mesh.frames, X) * np.sqrt(mesh.tri_area / mesh.flat_area)[:, None]
        dU = np.einsum("ta,tak->tk", Xf, G)
        acc = np.zeros((mesh.n_vertices, fun.K))
        np.add.at(acc, mesh.triangles.reshape(-1), np.repeat(dU, 3, axis=0) * wts[:, None])
        out[:, :, j] = target.tangent_project(u, acc / mesh.vertex_area[:, None], check=False)
    return out


def morse_index(fun: Functional, u, tol_eig: float | None = None, n_eig: int = 24,
                crit_tol: float = 1e-4, gauge: str = "auto") -> SpectrumReport:
    """Negative-eigenvalue count of the second variation (tol_eig default 1e-6 x spectral scale).

    gauge:
      "none"      - full tangent space;
      "conformal" - complement of the conformal reparametrization fields, which
                    are null directions of the conformally invariant alpha = 1
                    functional but carry O(h^2) eigenvalues of either sign on a mesh;
      "auto"      - "conformal" when alpha == 1, else "none".
    The ungauged counts are always reported as raw_index / raw_nullity.
    """
    if gauge == "auto":
        gauge = "conformal" if fun.params.alpha == 1.0 else "none"
    if gauge not in ("none", "conformal"):
        raise ValueError(f"unknown gauge {gauge!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("default", NotNearCritical)
        A, M, T, gn = assemble_jacobi(fun, u, crit_tol)
    w_raw, tol_default, scale = lowest_eigenvalues(A, M)
    tol = tol_default if tol_eig is None else tol_eig
    raw_idx, raw_nul = count_spectrum(w_raw, tol)
    w = w_raw
    if gauge == "conformal":
        C = conformal_fields(fun, u).reshape(-1, 6)
        w, _, _ = lowest_eigenvalues(A, M, deflate=T.T @ C)
    idx, nul = count_spectrum(w, tol)
    return SpectrumReport(w[: max(n_eig, idx + nul + 1)], idx, nul, tol, scale, gn, A.shape[0],
                          gauge, raw_idx, raw_nul)


# scalar comparison form for three-dimensional targets


def scalar_mean_curvature(form, target, y, frames=None):
    """h(y) = 1/2 d omega(f1, f2, f3) for the given oriented orthonormal tangent frames."""
    F = target.tangent_frame(y, check=False) if frames is None else frames
    H = form.H_tensor(y)
    return 0.5 * np.einsum("nkij,nk,ni,nj->n", H, F[:, :, 0], F[:, :, 1], F[:, :, 2])


def _transport_frame(target, y, F):
    """Project frame F onto T_yN and re-orthonormalize keeping its orientation."""
    P = target.tangent_projector(y, check=False)
    G = np.einsum("nij,nja->nia", P, F)
    Q, R = np.linalg.qr(G)
    s = np.sign(np.einsum("naa->na", R))
    s[s == 0] = 1.0
    return Q * s[:, None, :]


def mean_curvature_gradient_norm(form, target, y, eps: float = 1e-5):
    """|grad h| on N by central differences of h along an orthonormal tangent frame."""
    F = target.tangent_frame(y, check=False)
    g = np.zeros((len(y), target.dim))
    h_eps = eps * target.scale
    for a in range(target.dim):
        vals = []
        for sgn in (1.0, -1.0):
            yp = target.project_point(y + sgn * h_eps * F[:, :, a])
            Fp = _transport_frame(target, yp, F)
            vals.append(scalar_mean_curvature(form, target, yp, Fp))
        g[:, a] = (vals[0] - vals[1]) / (2.0 * h_eps)
    return np.linalg.norm(g, axis=1)


def image_normals(fun: Functional, u, area_tol: float = 1e-3):
    """Per-vertex unit normal of the image surface inside T_yN and a degeneracy flag.

    Each incident image triangle contributes its area-weighted normal computed
    in the vertex's tangent frame; vertices whose summed image area is below
    ``area_tol`` times the mean vertex image area are flagged.
    """
    mesh, target = fun.mesh, fun.target
    F = target.tangent_frame(u, check=False)  # (V, K, 3)
    p = u[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    acc = np.zeros((mesh.n_vertices, 3))
    area = np.zeros(mesh.n_vertices)
    for a in range(3):
        v = mesh.triangles[:, a]
        Fv = F[v]
        c = 0.5 * np.cross(np.einsum("tka,tk->ta", Fv, e1), np.einsum("tka,tk->ta", Fv, e2))
        np.add.at(acc, v, c)
        np.add.at(area, v, np.linalg.norm(c, axis=1))
    nrm = np.linalg.norm(acc, axis=1)
    mean_area = float(np.mean(area)) if np.any(area > 0) else 0.0
    flagged = (nrm <= area_tol * mean_area) | (area <= area_tol * mean_area)
    nloc = np.where(flagged[:, None], 0.0, acc / np.where(nrm > 0, nrm, 1.0)[:, None])
    normals = np.einsum("vka,va->vk", F, nloc)
    return normals, flagged


@dataclass
class BOmegaReport:
    index: int
    eigenvalues: np.ndarray
    tol_eig: float
    flagged: int
    potential_mean: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "tol_eig": self.tol_eig,
            "flagged_vertices": self.flagged,
            "potential_mean": self.potential_mean,
        }


def b_omega_potential(fun: Functional, u, area_tol: float = 1e-3):
    """Pointwise |H|^2 + Ric(n, n)/2 - |grad H| at the vertices, plus the degeneracy flags."""
    target, form = fun.target, fun.form
    if target.dim != 3:
        raise TargetNotThreeDimensional(f"comparison form needs a 3-dimensional target, got dim {target.dim}")
    normals, flagged = image_normals(fun, u, area_tol)
    # the form enters the functional with weight lam * tau^(alpha - 1)
    w = fun.params.omega_weight
    h = w * scalar_mean_curvature(form, target, u)
    dh = abs(w) * mean_curvature_gradient_norm(form, target, u)
    ric = target.ricci(u, normals, normals, check=False)
    return h**2 + 0.5 * ric - dh, flagged


def b_omega_index(fun: Functional, u, tol_eig: float | None = None, area_tol: float = 1e-3,
                  max_flagged_fraction: float = 0.1, potential=None) -> BOmegaReport:
    """Negative count of B(f, f) = int |grad f|^2 - |grad u|^2 Q f^2 on mesh functions.

    Q = |H|^2 + Ric(n, n)/2 - |grad H| unless ``potential`` (scalar or
    per-vertex array) overrides it.  Flagged vertices carry a Dirichlet condition.
    """
    mesh = fun.mesh
    if potential is None:
        Q, flagged = b_omega_potential(fun, u, area_tol)
    else:
        Q = np.broadcast_to(np.asarray(potential, float), (mesh.n_vertices,)).copy()
        flagged = np.zeros(mesh.n_vertices, dtype=bool)
    if flagged.mean() > max_flagged_fraction:
        raise DegenerateImmersion(f"{int(flagged.sum())} of {mesh.n_vertices} vertices have degenerate image")
    # conforming Galerkin form (consistent mass, no lumping): discrete eigenvalues
    # are Rayleigh-Ritz upper bounds, so the count cannot exceed the mesh continuum's
    pot = mesh.energy_density(u) * Q[mesh.triangles].mean(axis=1)
    A = (mesh.stiffness - mesh.mass_matrix(pot)).tocsr()
    M = mesh.mass_matrix()
    keep = np.flatnonzero(~flagged)
    A = A[keep][:, keep]
    M = M[keep][:, keep]
    w, tol_default, _ = pencil_eigenvalues(A, M, lower_bound=-float(np.max(pot, initial=0.0)) - 1.0)
    tol = tol_default if tol_eig is None else tol_eig
    idx, _ = count_spectrum(w, tol)
    return BOmegaReport(idx, w[: max(16, idx + 1)], tol, int(flagged.sum()), float(np.mean(Q)))


def energy_bound_check(fun: Functional, u, C0: float) -> dict:
    """Compare E(u) with the bound implied by the balancing argument for index <= 1 solutions.

    The argument gives C0 * int |grad u|^2 <= 8 pi, i.e. E(u) <= 4 pi / C0.
    The stated constant C0 / (8 pi) is reported alongside for reference.
    """
    E = fun.mesh.dirichlet(u)
    Q, _ = b_omega_potential(fun, u)
    holds = bool(np.min(Q) > C0)
    bound = 4.0 * math.pi / C0
    return {
        "dirichlet": E,
        "C0": C0,
        "condition_holds": holds,
        "potential_min": float(np.min(Q)),
        "bound": bound,
        "stated_bound": C0 / (8.0 * math.pi),
        "passes": bool(E <= bound * (1.0 + 1e-9)),
    }
