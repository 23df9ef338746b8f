"""Residual checks of the identities satisfied by critical points.

Conformality (Hopf differential), two Pohozaev-type boundary identities on
geodesic disks, the balancing identity from conformal dilations of the
domain, and the energy-identity bookkeeping of an alpha continuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import Functional, FunctionalParams
from .errors import NoContinuationData, RadiusOutOfChart
from .mesh import DomainMesh, chart_basis, inverse_stereographic

N_ARC = 64
PSI_LIMIT_EPS = 1e-8


@dataclass
class DiagnosticsReport:
    conformality: tuple
    pohozaev_radii: list
    pohozaev_boundary: list  # flat boundary identity, (alpha - 1) bulk term on the right
    pohozaev_weighted: list  # weighted identity with the energy bulk term
    balancing: np.ndarray
    balancing_relative: float
    el_residual: float
    energy_identity_defect: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "conformality": {"stretch": self.conformality[0], "shear": self.conformality[1]},
            "pohozaev": {
                "radii": [float(r) for r in self.pohozaev_radii],
                "boundary_residual": [float(r) for r in self.pohozaev_boundary],
                "weighted_residual": [float(r) for r in self.pohozaev_weighted],
            },
            "balancing": {
                "vector": [float(v) for v in self.balancing],
                "relative": self.balancing_relative,
            },
            "el_residual": self.el_residual,
            "energy_identity_defect": self.energy_identity_defect,
            **self.extra,
        }


# conformality


def hopf_modulus(mesh: DomainMesh, u) -> np.ndarray:
    """|phi| per triangle, phi = |u_1|^2 - |u_2|^2 - 2i <u_1, u_2> in the triangle frame."""
    g = mesh.gradients(u)
    a = np.einsum("tk,tk->t", g[:, 0], g[:, 0]) - np.einsum("tk,tk->t", g[:, 1], g[:, 1])
    b = np.einsum("tk,tk->t", g[:, 0], g[:, 1])
    return np.hypot(a, 2.0 * b)


def conformality(mesh: DomainMesh, u) -> tuple:
    """Area-weighted L2 norms of |u_1|^2 - |u_2|^2 and <u_1, u_2>, frame-rotation invariant.

    Rotating the frame by theta turns (a, 2b) by 2 theta, so neither defect is
    frame independent on its own.  Both are reported as root mean squares over
    all frame rotations: |phi| / sqrt(2) and |phi| / (2 sqrt(2)).
    """
    phi2 = hopf_modulus(mesh, u) ** 2
    tot = float(np.dot(mesh.tri_area, phi2))
    return math.sqrt(tot / 2.0), math.sqrt(tot / 8.0)


# Pohozaev identities


def _chart_jacobian(center, z):
    """d p / d z of the inverse stereographic chart, shape (n, 3, 2)."""
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    E = chart_basis(c)
    r2 = np.sum(z**2, axis=1)
    den = 1.0 + r2
    p = inverse_stereographic(c, z)
    # p = (2 z E + (1 - r2) c) / den
    J = 2.0 * E.T[None, :, :] / den[:, None, None]
    J -= 2.0 * (c[None, :, None] + p[:, :, None]) * z[:, None, :] / den[:, None, None]
    return p, J


def triangle_differentials(mesh: DomainMesh, u) -> np.ndarray:
    """du per triangle as a (T, K, 3) matrix acting on ambient 3-vectors."""
    G = mesh.gradients(u)
    conf = np.sqrt(mesh.flat_area / mesh.tri_area)
    return np.einsum("tak,tia->tki", G, mesh.frames) / conf[:, None, None]


def recovered_differential(mesh: DomainMesh, u) -> np.ndarray:
    """Area-weighted vertex average of the triangle differentials, (V, K, 3)."""
    D = triangle_differentials(mesh, u)
    w = np.repeat(mesh.tri_area / 3.0, 3)
    acc = np.zeros((mesh.n_vertices,) + D.shape[1:])
    np.add.at(acc, mesh.triangles.reshape(-1), np.repeat(D, 3, axis=0) * w[:, None, None])
    return acc / mesh.vertex_area[:, None, None]


def _check_radius(rho):
    if not 0.0 < rho <= math.pi / 2 + 1e-12:
        raise RadiusOutOfChart(f"geodesic radius {rho} outside (0, pi/2]")


def pohozaev_residual(fun: Functional, u, center_vertex: int, radii, n_arc: int = N_ARC,
                      variant: str = "boundary") -> list:
    """Defect of a Pohozaev identity on geodesic disks around a vertex.

    Radii are geodesic radii rho in (0, pi/2]; the disk is the chart disk
    |z| < t = tan(rho / 2) of the stereographic chart centered at the vertex,
    which is conformal, so the flat-chart identities apply verbatim.

    variant "boundary":
        int_{|z|=t} |u_r|^2 - |u_theta|^2 / r^2 ds
          = -(2 (alpha - 1) / t) int_{|z|<t} <grad s . grad u, r u_r> / (tau + s) dz
    variant "weighted" (F = (tau + s)^(alpha - 1)):
        (1 - 1/(2 alpha)) int F |u_r|^2 ds - 1/(2 alpha) int F |u_theta|^2 / r^2 ds
          = (1 - 1/alpha) (1/t) int_{|z|<t} F |grad u|^2 dz
    with s = |grad u|^2 in the round metric.  Returns |left - right| per radius.
    Boundary integrals use ``n_arc`` samples with barycentric interpolation of
    the piecewise-constant gradient.
    """
    mesh = fun.mesh
    p_: FunctionalParams = fun.params
    alpha, tau = p_.alpha, p_.tau
    if variant not in ("boundary", "weighted"):
        raise ValueError(f"unknown Pohozaev variant {variant!r}")
    c = mesh.vertices[center_vertex]
    G = mesh.gradients(u)
    s_tri = np.einsum("tak,tak->t", G, G)
    s_v = mesh.vertex_energy_density(u)
    F_tri = (tau + s_tri) ** (alpha - 1.0)
    theta = 2.0 * math.pi * np.arange(n_arc) / n_arc
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    dist = mesh.geodesic_distance(c, mesh.barycenters)
    Dv = recovered_differential(mesh, u)
    if variant == "boundary" and alpha != 1.0:
        grad_s = np.einsum("tav,tv->ta", mesh.tri_grad, s_v[mesh.triangles])
        X = (mesh.barycenters @ c)[:, None] * mesh.barycenters - c  # chart field r d/dr
        dUX = np.einsum("tki,ti->tk", triangle_differentials(mesh, u), X)
        bulk_density = np.einsum("ta,tak,tk->t", grad_s, G, dUX) / (tau + s_tri)
    out = []
    for rho in radii:
        rho = float(rho)
        _check_radius(rho)
        t = math.tan(rho / 2.0)
        p, J = _chart_jacobian(c, t * dirs)
        tri, bw = mesh.locate(p)
        D = np.einsum("nv,nvki->nki", bw, Dv[mesh.triangles[tri]])
        ur = np.einsum("nki,nij,nj->nk", D, J, dirs)
        ut_over_r = np.einsum("nki,nij,nj->nk", D, J, dirs[:, ::-1] * [-1.0, 1.0])
        ur2 = np.einsum("nk,nk->n", ur, ur)
        ut2 = np.einsum("nk,nk->n", ut_over_r, ut_over_r)
        ds = 2.0 * math.pi * t / n_arc
        inside = dist < rho
        if variant == "boundary":
            lhs = float(np.sum(ur2 - ut2)) * ds
            rhs = 0.0
            if alpha != 1.0:
                # in a conformal chart grad s . grad u dz = <grad s, grad u>_g dV_g
                rhs = -2.0 * (alpha - 1.0) / t * float(np.dot(mesh.tri_area[inside], bulk_density[inside]))
        else:
            Fb = F_tri[tri]
            lhs = ((1.0 - 0.5 / alpha) * float(np.sum(Fb * ur2)) - 0.5 / alpha * float(np.sum(Fb * ut2))) * ds
            # |grad u|^2 dz equals s dV_g in a conformal chart
            rhs = (1.0 - 1.0 / alpha) / t * float(np.dot(mesh.tri_area[inside], (F_tri * s_tri)[inside]))
        out.append(abs(lhs - rhs))
    return out


# balancing


def psi_alpha(r, alpha: float, tau: float = 1.0):
    """(alpha (tau + r)^(alpha-1) r - (tau + r)^alpha + tau^alpha) / (alpha - 1), stably.

    Rewritten as r (tau + r)^(alpha-1) - tau^alpha expm1((alpha-1) log1p(r/tau)) / (alpha-1),
    which has no cancelling difference; the alpha -> 1 limit r - tau log(1 + r/tau)
    is used when alpha - 1 < 1e-8.
    """
    r = np.asarray(r, float)
    a = alpha - 1.0
    l1p = np.log1p(r / tau)
    if a < PSI_LIMIT_EPS:
        return r - tau * l1p
    return r * np.exp(a * np.log(tau + r)) - tau**alpha * np.expm1(a * l1p) / a


def balancing(mesh: DomainMesh, u, params: FunctionalParams | None = None):
    """sum_v x_v Psi_alpha(|grad u|^2_v) area_v (3-vector) and sum_v Psi_alpha area_v."""
    p = FunctionalParams() if params is None else params
    psi = psi_alpha(mesh.vertex_energy_density(u), p.alpha, p.tau) * mesh.vertex_area
    return mesh.vertices.T @ psi, float(np.sum(psi))


def balancing_relative(mesh: DomainMesh, u, params: FunctionalParams | None = None) -> float:
    vec, tot = balancing(mesh, u, params)
    return float(np.linalg.norm(vec) / tot) if tot > 0 else 0.0


# energy identity


def energy_identity_defect(continuation) -> float:
    """E_alpha - [E(base) + Area/2 + sum mu^2 E(w)] at the last stage of a continuation.

    E(base) is the Dirichlet energy outside every detected neck disk.
    """
    if continuation is None or not getattr(continuation, "stages", None):
        raise NoContinuationData("energy identity needs a completed alpha continuation")
    st = continuation.final
    base = st.dirichlet - sum(st.dirichlet - b.base_energy for b in st.bubbles)
    bubbles = sum(b.mu**2 * b.bubble_energy for b in st.bubbles)
    return float(st.alpha_energy - (base + 0.5 * st.area + bubbles))


def default_center(mesh: DomainMesh, u) -> int:
    """Vertex of maximal energy density (lowest index on ties)."""
    return int(np.argmax(mesh.vertex_energy_density(u)))


def diagnose(fun: Functional, u, center_vertex: int | None = None, radii=(0.25, 0.5, 0.75, 1.0, 1.25),
             continuation=None) -> DiagnosticsReport:
    mesh = fun.mesh
    cv = default_center(mesh, u) if center_vertex is None else int(center_vertex)
    vec, tot = balancing(mesh, u, fun.params)
    defect = None
    if continuation is not None:
        defect = energy_identity_defect(continuation)
    return DiagnosticsReport(
        conformality=conformality(mesh, u),
        pohozaev_radii=list(radii),
        pohozaev_boundary=pohozaev_residual(fun, u, cv, radii, variant="boundary"),
        pohozaev_weighted=pohozaev_residual(fun, u, cv, radii, variant="weighted"),
        balancing=vec,
        balancing_relative=float(np.linalg.norm(vec) / tot) if tot > 0 else 0.0,
        el_residual=fun.grad_norm(u),
        energy_identity_defect=defect,
        extra={"center_vertex": cv},
    )
