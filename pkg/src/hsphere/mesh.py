"""Triangulated unit 2-sphere with P1 finite-element data."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import IndexOutOfRange, SubdivisionOutOfRange

MAX_SUBDIVISIONS = 8


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    """Split every triangle into four, inserting normalized edge midpoints."""
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nv = len(v)
    m = nv + inv.reshape(3, -1).T  # midpoints of edges (01, 12, 20) for each face
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    nf = np.concatenate(
        [
            np.stack([a, m01, m20], 1),
            np.stack([b, m12, m01], 1),
            np.stack([c, m20, m12], 1),
            np.stack([m01, m12, m20], 1),
        ]
    )
    return np.vstack([v, mid]), nf


def rotation_from_seed(seed: int) -> np.ndarray:
    """Deterministic generic rotation matrix (QR of a seeded Gaussian matrix)."""
    g = np.random.default_rng(seed).standard_normal((3, 3))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class DomainMesh:
    """Closed oriented triangulation of the unit sphere.

    Per triangle T with corners p0, p1, p2 the orthonormal frame is
    f1 = e1/|e1|, f2 = unit part of e2 orthogonal to f1 (e1 = p1 - p0,
    e2 = p2 - p0); ``tri_grad[T]`` is the 2x3 matrix mapping corner values
    to the constant gradient expressed in (f1, f2).

    With ``metric="round"`` each flat triangle carries the constant conformal
    metric that gives it its exact spherical area: ``tri_area`` is the
    spherical excess and ``tri_grad`` is scaled by sqrt(flat/spherical area).
    Dirichlet energies are unchanged by this (conformal invariance) while the
    measure sums to exactly 4 pi.  ``metric="flat"`` uses the chordal metric.
    """

    def __init__(self, vertices, triangles, subdivisions=None, rotation=None, metric="flat"):
        if metric not in ("flat", "round"):
            raise ValueError("metric must be 'flat' or 'round'")
        self.metric = metric
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.subdivisions = subdivisions
        self.rotation = None if rotation is None else np.asarray(rotation, float)
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self._build()

    def _build(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        n = np.cross(e1, e2)
        self.flat_area = 0.5 * np.linalg.norm(n, axis=1)
        if self.metric == "round":
            a, b, c = p[:, 0], p[:, 1], p[:, 2]
            num = np.abs(np.einsum("ti,ti->t", a, np.cross(b, c)))
            den = 1.0 + np.einsum("ti,ti->t", a, b) + np.einsum("ti,ti->t", b, c) + np.einsum("ti,ti->t", c, a)
            self.tri_area = 2.0 * np.arctan2(num, den)
        else:
            self.tri_area = self.flat_area.copy()
        f1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
        f2 = e2 - np.einsum("ti,ti->t", e2, f1)[:, None] * f1
        f2 /= np.linalg.norm(f2, axis=1, keepdims=True)
        self.frames = np.stack([f1, f2], axis=2)  # (T, 3, 2)
        # Q[:, a, b] = <e_b, f_a>; gradient g solves Q^T g = (du1, du2)
        Q = np.empty((len(p), 2, 2))
        Q[:, 0, 0] = np.einsum("ti,ti->t", e1, f1)
        Q[:, 0, 1] = np.einsum("ti,ti->t", e2, f1)
        Q[:, 1, 0] = 0.0
        Q[:, 1, 1] = np.einsum("ti,ti->t", e2, f2)
        B = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        QinvT = np.linalg.inv(np.swapaxes(Q, 1, 2))
        conf = np.sqrt(self.flat_area / self.tri_area)
        self.tri_grad = conf[:, None, None] * (QinvT @ B)  # (T, 2, 3)
        self.edge_coords = Q
        self.vertex_area = np.bincount(
            self.triangles.reshape(-1), weights=np.repeat(self.tri_area / 3.0, 3), minlength=self.n_vertices
        )
        for arr in (self.tri_area, self.flat_area, self.frames, self.tri_grad, self.vertex_area):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(np.sum(self.tri_area))

    @cached_property
    def barycenters(self) -> np.ndarray:
        b = self.vertices[self.triangles].mean(axis=1)
        return b / np.linalg.norm(b, axis=1, keepdims=True)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Scalar P1 stiffness matrix sum_T area_T D_T^T D_T."""
        S = np.einsum("t,tai,taj->tij", self.tri_area, self.tri_grad, self.tri_grad)
        rows = np.repeat(self.triangles, 3, axis=1).reshape(-1)
        cols = np.tile(self.triangles, (1, 3)).reshape(-1)
        return sp.csr_matrix((S.reshape(-1), (rows, cols)), shape=(self.n_vertices,) * 2)

    def mass_matrix(self, weights=None) -> sp.csr_matrix:
        """Consistent P1 mass matrix of sum_T w_T int_T phi_i phi_j (w = 1 by default)."""
        w = self.tri_area if weights is None else self.tri_area * np.asarray(weights, float)
        loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = w[:, None, None] * loc[None]
        rows = np.repeat(self.triangles, 3, axis=1).reshape(-1)
        cols = np.tile(self.triangles, (1, 3)).reshape(-1)
        return sp.csr_matrix((vals.reshape(-1), (rows, cols)), shape=(self.n_vertices,) * 2)

    @cached_property
    def mean_edge_length(self) -> float:
        p = self.vertices[self.triangles]
        return float(np.mean(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)))

    # gradients
    def gradients(self, u) -> np.ndarray:
        """Per-triangle gradients, shape (T, 2, K)."""
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_vertices:
            raise ValueError(f"map has {u.shape[0]} rows, mesh has {self.n_vertices} vertices")
        return np.einsum("tav,tvk->tak", self.tri_grad, u[self.triangles])

    def energy_density(self, u) -> np.ndarray:
        """|grad u|^2 per triangle."""
        g = self.gradients(u)
        return np.einsum("tak,tak->t", g, g)

    def dirichlet(self, u) -> float:
        return 0.5 * float(np.dot(self.tri_area, self.energy_density(u)))

    def vertex_energy_density(self, u) -> np.ndarray:
        """Area-weighted average of |grad u|^2 over the triangles around each vertex."""
        s = self.energy_density(u)
        acc = np.bincount(self.triangles.reshape(-1), weights=np.repeat(self.tri_area * s / 3.0, 3),
                          minlength=self.n_vertices)
        return acc / self.vertex_area

    # geometry queries
    def geodesic_distance(self, center, points) -> np.ndarray:
        c = np.asarray(center, float)
        c = c / np.linalg.norm(c)
        return np.arccos(np.clip(np.asarray(points) @ c, -1.0, 1.0))

    def annulus_mask(self, center_vertex: int, r_in: float, r_out: float) -> np.ndarray:
        if not 0 <= center_vertex < self.n_vertices:
            raise IndexOutOfRange(f"vertex {center_vertex} not in [0, {self.n_vertices})")
        d = self.geodesic_distance(self.vertices[center_vertex], self.barycenters)
        inside_outer = np.ones_like(d, dtype=bool) if r_out >= np.pi else d < r_out
        return (d >= r_in) & inside_outer

    def annulus_energy(self, u, center_vertex: int, r_in: float, r_out: float) -> float:
        """Dirichlet energy over triangles whose barycenter lies in the geodesic annulus."""
        if not 0 <= r_in < r_out:
            raise ValueError("annulus radii must satisfy 0 <= r_in < r_out")
        mask = self.annulus_mask(center_vertex, r_in, r_out)
        return 0.5 * float(np.dot(self.tri_area[mask], self.energy_density(u)[mask]))

    @cached_property
    def _tree(self):
        return cKDTree(self.barycenters)

    @cached_property
    def _corner_inv(self):
        # columns are the corner positions; solving gives ray barycentric weights
        M = np.swapaxes(self.vertices[self.triangles], 1, 2)
        return np.linalg.inv(M)

    def locate(self, points, k: int = 12):
        """Triangle index and barycentric weights of the radial projection of points."""
        pts = np.atleast_2d(np.asarray(points, float))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        k = min(k, self.n_triangles)
        _, cand = self._tree.query(pts, k=k)
        cand = np.atleast_2d(cand)
        tri = np.full(len(pts), -1)
        w = np.zeros((len(pts), 3))
        for j in range(cand.shape[1]):
            todo = tri < 0
            if not np.any(todo):
                break
            c = cand[todo, j]
            lam = np.einsum("nij,nj->ni", self._corner_inv[c], pts[todo])
            ok = np.all(lam >= -1e-12, axis=1)
            idx = np.nonzero(todo)[0][ok]
            tri[idx] = c[ok]
            w[idx] = lam[ok] / lam[ok].sum(axis=1, keepdims=True)
        for i in np.nonzero(tri < 0)[0]:
            lam = self._corner_inv @ pts[i]
            j = int(np.argmax(lam.min(axis=1)))
            tri[i] = j
            w[i] = lam[j] / lam[j].sum()
        return tri, w

    def interpolate(self, u, points) -> np.ndarray:
        """Evaluate the P1 map at arbitrary points of the sphere."""
        tri, w = self.locate(points)
        u = np.asarray(u, float)
        return np.einsum("nv,nvk->nk", w, u[self.triangles[tri]])

    def is_oriented_closed(self) -> bool:
        """Every directed edge appears once and its reverse appears exactly once."""
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        n = self.n_vertices
        key = e[:, 0] * n + e[:, 1]
        rkey = e[:, 1] * n + e[:, 0]
        if len(np.unique(key)) != len(key):
            return False
        return bool(np.array_equal(np.sort(key), np.sort(rkey)))

    def is_outward(self) -> bool:
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return bool(np.all(np.einsum("ti,ti->t", n, p.mean(axis=1)) > 0))

    def to_obj(self, u=None) -> str:
        """Plain-text indexed mesh: 'v x y z ...' lines then 1-based 'f a b c' lines."""
        pos = self.vertices if u is None else np.asarray(u, float)
        lines = ["v " + " ".join(f"{x:.17g}" for x in row) for row in pos]
        lines += ["f " + " ".join(str(i + 1) for i in tri) for tri in self.triangles]
        return "\n".join(lines) + "\n"


def map_gradient(mesh: DomainMesh, u, t: int) -> np.ndarray:
    """2xK gradient of the P1 map on triangle t in that triangle's orthonormal frame."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexOutOfRange(f"triangle {t} not in [0, {mesh.n_triangles})")
    u = np.asarray(u, dtype=float)
    return mesh.tri_grad[t] @ u[mesh.triangles[t]]


def annulus_energy(mesh: DomainMesh, u, center_vertex: int, r_in: float, r_out: float) -> float:
    return mesh.annulus_energy(u, center_vertex, r_in, r_out)


_CACHE: dict = {}


def icosphere(subdivisions: int, rotation=None) -> DomainMesh:
    """Subdivided icosahedron on the unit sphere with 10*4^s + 2 vertices.

    ``rotation`` (3x3 orthogonal matrix or integer seed) rotates the vertex
    positions, which breaks the alignment of the mesh with coordinate axes.
    """
    if isinstance(subdivisions, bool) or not isinstance(subdivisions, (int, np.integer)):
        raise SubdivisionOutOfRange(f"subdivisions must be an integer, got {subdivisions!r}")
    s = int(subdivisions)
    if not 0 <= s <= MAX_SUBDIVISIONS:
        raise SubdivisionOutOfRange(f"subdivisions {s} not in [0, {MAX_SUBDIVISIONS}]")
    if s not in _CACHE:
        v, f = _icosahedron()
        for _ in range(s):
            v, f = _subdivide(v, f)
        _CACHE[s] = (v, f)
    v, f = _CACHE[s]
    R = None
    if rotation is not None:
        R = rotation_from_seed(int(rotation)) if np.isscalar(rotation) else np.asarray(rotation, float)
        v = v @ R.T
    return DomainMesh(v, f, subdivisions=s, rotation=R, metric="round")


def jittered_icosphere(subdivisions: int, amplitude: float = 0.2, seed: int = 0) -> DomainMesh:
    """Icosphere with seeded tangential vertex noise of size ``amplitude`` x edge length.

    Breaks the antipodal symmetry of the icosahedral mesh, which otherwise
    makes odd integrals such as the balancing vector vanish identically.
    """
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    v = base.vertices
    d = rng.uniform(-1.0, 1.0, v.shape)
    d -= np.einsum("vi,vi->v", d, v)[:, None] * v
    v = v + amplitude * base.mean_edge_length * d
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return DomainMesh(v, base.triangles, subdivisions=base.subdivisions, metric="round")


# conformal charts of the unit sphere


def chart_basis(center) -> np.ndarray:
    """Orthonormal (e1, e2) spanning the tangent plane at ``center`` (rows)."""
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    axis = np.eye(3)[int(np.argmin(np.abs(c)))]
    e1 = axis - np.dot(axis, c) * c
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return np.stack([e1, e2])


def stereographic(center, points) -> np.ndarray:
    """Conformal chart from the antipode of ``center``; center -> 0, |z| = tan(rho / 2)."""
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    pts = np.atleast_2d(np.asarray(points, float))
    E = chart_basis(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (pts @ E.T) / (1.0 + pts @ c)[:, None]


def inverse_stereographic(center, z) -> np.ndarray:
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    z = np.atleast_2d(np.asarray(z, float))
    E = chart_basis(c)
    r2 = np.sum(z**2, axis=1, keepdims=True)
    return (2.0 * z @ E + (1.0 - r2) * c) / (1.0 + r2)


def mobius_dilation(center, scale: float, points) -> np.ndarray:
    """Conformal map of the sphere acting as z -> scale * z in the chart at ``center``."""
    pts = np.atleast_2d(np.asarray(points, float))
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = inverse_stereographic(c, scale * stereographic(c, pts))
    # the antipode is a fixed point; the chart is singular there
    anti = (pts @ c) <= -1.0 + 1e-15
    out[anti] = -c
    return out
