"""Target manifolds N in R^K and 2-forms on the ambient space.

All pointwise routines accept either a single point of shape ``(K,)`` or a
batch of shape ``(N, K)``; vector arguments broadcast the same way.

Two-form coefficients follow the convention ``c_ij(y) = omega(d_i, d_j)``, so
for a surface element spanned by ``a`` and ``b`` the form evaluates to
``a^T c b`` and the pullback of ``omega`` over a flat triangle with edges
``e1, e2`` is ``1/2 e1^T c e2``.  With this convention
``H^k_ij = d_k c_ij + d_i c_jk + d_j c_ki`` equals ``d omega(d_k, d_i, d_j)``
and the first variation of ``int u^* omega`` along ``V`` is
``int <H(u_x, u_y), V>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import OutsideTubularNeighborhood, PointOffManifold


def _as2d(y):
    y = np.asarray(y, dtype=float)
    return y.reshape(-1, y.shape[-1]), y.ndim == 1


def _ret(arr, single):
    return arr[0] if single else arr


class TargetManifold:
    """Closed (or flat Euclidean) submanifold of R^K."""

    kind: str = "abstract"
    ambient_dim: int
    dim: int
    tubular_radius: float
    scale: float = 1.0

    @property
    def tol_on_manifold(self) -> float:
        return 1e-10 * self.scale

    # subclasses implement the batched primitives below
    def _project(self, y):
        raise NotImplementedError

    def _defect(self, y):
        """Distance-like residual of the defining equations, shape (N,)."""
        raise NotImplementedError

    def _normal_basis(self, y):
        """Orthonormal normal frame, shape (N, K, K - dim)."""
        raise NotImplementedError

    def _sff(self, y, X, Y):
        raise NotImplementedError

    def _weingarten(self, y, nvec):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def _projection_ok(self, y, dist):
        """Whether the nearest point is unique; convex kinds relax this outside."""
        return dist < self.tubular_radius

    # public API
    def contains(self, y, tol=None) -> np.ndarray:
        y2, single = _as2d(y)
        tol = self.tol_on_manifold if tol is None else tol
        return _ret(self._defect(y2) <= tol, single)

    def check_on(self, y):
        y2, _ = _as2d(y)
        d = self._defect(y2)
        if np.any(~(d <= self.tol_on_manifold)):
            raise PointOffManifold(
                f"point off {self.kind}: defect {float(np.nanmax(d)):.3e} "
                f"> {self.tol_on_manifold:.1e}"
            )

    def project_point(self, y):
        y2, single = _as2d(y)
        if not np.all(np.isfinite(y2)):
            raise OutsideTubularNeighborhood("non-finite ambient point")
        p = self._project(y2)
        dist = np.linalg.norm(y2 - p, axis=1)
        if np.any(~self._projection_ok(y2, dist)) or not np.all(np.isfinite(p)):
            d = float(np.max(self._defect(y2)))
            raise OutsideTubularNeighborhood(
                f"distance {d:.3e} to {self.kind} is not below "
                f"the tubular radius {self.tubular_radius:.3e}"
            )
        return _ret(p, single)

    def normal_basis(self, y):
        y2, single = _as2d(y)
        self.check_on(y2)
        return _ret(self._normal_basis(y2), single)

    def tangent_projector(self, y, check=True):
        """Orthogonal projector onto T_yN, shape (..., K, K)."""
        y2, single = _as2d(y)
        if check:
            self.check_on(y2)
        nb = self._normal_basis(y2)
        P = np.broadcast_to(np.eye(self.ambient_dim), (len(y2),) + (self.ambient_dim,) * 2).copy()
        P -= np.einsum("nia,nja->nij", nb, nb)
        return _ret(P, single)

    def tangent_project(self, y, v, check=True):
        y2, single = _as2d(y)
        v2 = np.broadcast_to(np.asarray(v, dtype=float), y2.shape)
        if check:
            self.check_on(y2)
        nb = self._normal_basis(y2)
        out = v2 - np.einsum("nia,na->ni", nb, np.einsum("nia,ni->na", nb, v2))
        return _ret(out, single)

    def tangent_frame(self, y, check=True):
        """Orthonormal tangent frame, shape (..., K, dim).

        Gram-Schmidt over the projected ambient axes taken in index order;
        an axis is skipped when its residual is shorter than 0.25, which always
        leaves enough admissible axes because the residual norms squared sum
        to the remaining rank.
        """
        y2, single = _as2d(y)
        P = self.tangent_projector(y2, check=check)
        n, K, d = len(y2), self.ambient_dim, self.dim
        F = np.zeros((n, K, d))
        count = np.zeros(n, dtype=int)
        for a in range(K):
            r = P[:, :, a].copy()
            for j in range(d):
                mask = (count > j)[:, None]
                proj = np.einsum("ni,ni->n", F[:, :, j], r)[:, None] * F[:, :, j]
                r -= np.where(mask, proj, 0.0)
            nr = np.linalg.norm(r, axis=1)
            take = (nr > 0.25) & (count < d)
            idx = np.nonzero(take)[0]
            F[idx, :, count[idx]] = r[idx] / nr[idx, None]
            count[idx] += 1
        return _ret(F, single)

    def second_fundamental_form(self, y, X, Y, check=True):
        y2, single = _as2d(y)
        if check:
            self.check_on(y2)
        X2 = np.broadcast_to(np.asarray(X, dtype=float), y2.shape)
        Y2 = np.broadcast_to(np.asarray(Y, dtype=float), y2.shape)
        return _ret(self._sff(y2, X2, Y2), single)

    def weingarten(self, y, nvec, check=True):
        """Matrix S with <nvec, A(X, Y)> = X^T S Y for tangent X, Y.

        Only the tangential block is meaningful; ``nvec`` may be any ambient
        vector (its tangential part is ignored by construction of A).
        """
        y2, single = _as2d(y)
        if check:
            self.check_on(y2)
        n2 = np.broadcast_to(np.asarray(nvec, dtype=float), y2.shape)
        return _ret(self._weingarten(y2, n2), single)

    def curvature(self, y, X, Y, Z, W, check=True):
        """Riemann tensor R(X,Y,Z,W) = <A(X,Z),A(Y,W)> - <A(X,W),A(Y,Z)>.

        Sign convention: R(X,Y,X,Y) is the sectional curvature for orthonormal X, Y.
        """
        y2, single = _as2d(y)
        if check:
            self.check_on(y2)
        b = lambda v: np.broadcast_to(np.asarray(v, dtype=float), y2.shape)
        X, Y, Z, W = b(X), b(Y), b(Z), b(W)
        A = self._sff
        val = np.einsum("ni,ni->n", A(y2, X, Z), A(y2, Y, W)) - np.einsum(
            "ni,ni->n", A(y2, X, W), A(y2, Y, Z)
        )
        return _ret(val, single)

    def ricci(self, y, X, Y, check=True):
        """Ric(X, Y) = sum_i R(X, f_i, Y, f_i) over an orthonormal tangent frame."""
        y2, single = _as2d(y)
        F = self.tangent_frame(y2, check=check)
        b = lambda v: np.broadcast_to(np.asarray(v, dtype=float), y2.shape)
        X, Y = b(X), b(Y)
        tot = np.zeros(len(y2))
        for i in range(self.dim):
            f = F[:, :, i]
            tot += self.curvature(y2, X, f, Y, f, check=False)
        return _ret(tot, single)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n random points on N (not uniformly distributed in general)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class RoundSphere(TargetManifold):
    kind = "round_sphere"

    def __init__(self, n: int = 2, radius: float = 1.0, center=None):
        if n < 1:
            raise ValueError("sphere dimension must be positive")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.dim = int(n)
        self.ambient_dim = self.dim + 1
        self.radius = float(radius)
        self.center = np.zeros(self.ambient_dim) if center is None else np.asarray(center, float)
        self.tubular_radius = self.radius
        self.scale = self.radius

    def params(self):
        return {"n": self.dim, "radius": self.radius}

    def _project(self, y):
        d = y - self.center
        nrm = np.linalg.norm(d, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.center + self.radius * d / nrm

    def _defect(self, y):
        return np.abs(np.linalg.norm(y - self.center, axis=1) - self.radius)

    def _projection_ok(self, y, dist):
        return np.linalg.norm(y - self.center, axis=1) > 1e-12 * self.radius

    def _normal_basis(self, y):
        d = y - self.center
        return (d / np.linalg.norm(d, axis=1, keepdims=True))[:, :, None]

    def _sff(self, y, X, Y):
        return -np.einsum("ni,ni->n", X, Y)[:, None] * (y - self.center) / self.radius**2

    def _weingarten(self, y, nvec):
        s = -np.einsum("ni,ni->n", nvec, y - self.center) / self.radius**2
        return s[:, None, None] * np.eye(self.ambient_dim)

    def sample(self, n, rng):
        g = rng.standard_normal((n, self.ambient_dim))
        return self.center + self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)


class Ellipsoid(TargetManifold):
    """Hypersurface sum_i (y_i / a_i)^2 = 1."""

    kind = "ellipsoid"

    def __init__(self, semiaxes: Sequence[float]):
        a = np.asarray(semiaxes, dtype=float)
        if a.ndim != 1 or len(a) not in (3, 4) or np.any(a <= 0):
            raise ValueError("ellipsoid needs 3 or 4 positive semiaxes")
        self.semiaxes = a
        self.ambient_dim = len(a)
        self.dim = len(a) - 1
        # smallest principal radius of curvature
        self.tubular_radius = float(a.min() ** 2 / a.max())
        self.scale = float(a.max())

    def params(self):
        return {"semiaxes": self.semiaxes.tolist()}

    def _project(self, y):
        # nearest point x_i = a_i^2 y_i / (a_i^2 + t), with t the root of
        # f(t) = sum a_i^2 y_i^2 / (a_i^2 + t)^2 - 1 on (-a_min^2, inf), where f decreases
        a2 = self.semiaxes**2
        amin2 = a2.min()
        lo = np.full(len(y), -amin2)
        # f(hi) < 0 for hi = |a y|_max
        hi = np.maximum(np.sqrt(np.sum(a2 * y**2, axis=1)), 1.0) * 2 + a2.max()

        def f(t):
            return np.sum(a2 * y**2 / (a2 + t[:, None]) ** 2, axis=1) - 1.0

        def fp(t):
            return -2.0 * np.sum(a2 * y**2 / (a2 + t[:, None]) ** 3, axis=1)

        t = np.zeros(len(y))
        for _ in range(200):
            with np.errstate(divide="ignore", invalid="ignore"):
                ft = f(t)
                pos = ft > 0
                lo = np.where(pos, t, lo)
                hi = np.where(pos, hi, t)
                step = t - ft / fp(t)
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            new = np.where(bad, 0.5 * (lo + hi), step)
            if np.all(np.abs(new - t) <= 1e-15 * (1.0 + np.abs(t))):
                t = new
                break
            t = new
        with np.errstate(divide="ignore", invalid="ignore"):
            x = a2 * y / (a2 + t[:, None])
        # polish onto the quadric by a radial rescale (changes x by O(eps))
        x /= np.sqrt(np.sum(x**2 / a2, axis=1, keepdims=True))
        return x

    def _projection_ok(self, y, dist):
        outside = np.sum((y / self.semiaxes) ** 2, axis=1) >= 1.0
        return outside | (dist < self.tubular_radius)

    def _defect(self, y):
        a = self.semiaxes
        q = np.sqrt(np.sum((y / a) ** 2, axis=1))
        grad_scale = np.linalg.norm(y / a**2, axis=1) / np.maximum(q, 1e-300)
        # first-order distance |q - 1| / |grad q|
        return np.abs(q - 1.0) / np.maximum(grad_scale, 1e-300)

    def _unit_normal(self, y):
        g = y / self.semiaxes**2
        gn = np.linalg.norm(g, axis=1, keepdims=True)
        return g / gn, 2.0 * gn[:, 0]

    def _normal_basis(self, y):
        return self._unit_normal(y)[0][:, :, None]

    def _sff(self, y, X, Y):
        nu, gnorm = self._unit_normal(y)
        hess = 2.0 / self.semiaxes**2
        s = np.einsum("ni,i,ni->n", X, hess, Y) / gnorm
        return -s[:, None] * nu

    def _weingarten(self, y, nvec):
        nu, gnorm = self._unit_normal(y)
        c = -np.einsum("ni,ni->n", nvec, nu) / gnorm
        return c[:, None, None] * np.diag(2.0 / self.semiaxes**2)

    def sample(self, n, rng):
        g = rng.standard_normal((n, self.ambient_dim))
        x = g * self.semiaxes
        return x / np.sqrt(np.sum((x / self.semiaxes) ** 2, axis=1, keepdims=True))


class FlatEuclidean(TargetManifold):
    kind = "flat_euclidean"

    def __init__(self, K: int = 3):
        self.ambient_dim = int(K)
        self.dim = int(K)
        self.tubular_radius = np.inf
        self.scale = 1.0

    def params(self):
        return {"K": self.ambient_dim}

    def _project(self, y):
        return y.copy()

    def _defect(self, y):
        return np.zeros(len(y))

    def _normal_basis(self, y):
        return np.zeros((len(y), self.ambient_dim, 0))

    def _sff(self, y, X, Y):
        return np.zeros_like(y)

    def _weingarten(self, y, nvec):
        return np.zeros((len(y), self.ambient_dim, self.ambient_dim))

    def tangent_frame(self, y, check=True):
        y2, single = _as2d(y)
        F = np.broadcast_to(np.eye(self.ambient_dim), (len(y2),) + (self.ambient_dim,) * 2).copy()
        return _ret(F, single)

    def sample(self, n, rng):
        return rng.uniform(-1.0, 1.0, (n, self.ambient_dim))


class FlatTorus(TargetManifold):
    """Flat n-torus embedded as a product of circles in R^{2n}.

    Circle j lives in coordinates (2j, 2j+1) with radius periods[j] / (2 pi);
    the product embedding is intrinsically flat (the Gauss-equation terms of
    the circle factors cancel).
    """

    kind = "flat_torus"

    def __init__(self, n: int = 3, periods: Sequence[float] | None = None):
        per = np.full(n, 2 * np.pi) if periods is None else np.asarray(periods, float)
        if per.shape != (n,) or np.any(per <= 0):
            raise ValueError("flat torus needs n positive periods")
        self.periods = per
        self.radii = per / (2 * np.pi)
        self.dim = int(n)
        self.ambient_dim = 2 * self.dim
        self.tubular_radius = float(self.radii.min())
        self.scale = float(self.radii.max())

    def params(self):
        return {"n": self.dim, "periods": self.periods.tolist()}

    def _pairs(self, y):
        return y.reshape(len(y), self.dim, 2)

    def _project(self, y):
        p = self._pairs(y)
        nrm = np.linalg.norm(p, axis=2, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.radii[None, :, None] * p / nrm
        return out.reshape(len(y), -1)

    def _projection_ok(self, y, dist):
        nrm = np.linalg.norm(self._pairs(y), axis=2)
        return np.all(nrm > 1e-12 * self.radii, axis=1)

    def _defect(self, y):
        nrm = np.linalg.norm(self._pairs(y), axis=2)
        return np.sqrt(np.sum((nrm - self.radii) ** 2, axis=1))

    def _normal_basis(self, y):
        p = self._pairs(y)
        u = p / np.linalg.norm(p, axis=2, keepdims=True)
        nb = np.zeros((len(y), self.ambient_dim, self.dim))
        for j in range(self.dim):
            nb[:, 2 * j : 2 * j + 2, j] = u[:, j]
        return nb

    def _sff(self, y, X, Y):
        Xp, Yp, p = self._pairs(X), self._pairs(Y), self._pairs(y)
        c = -np.einsum("njk,njk->nj", Xp, Yp) / self.radii**2
        return (c[:, :, None] * p).reshape(len(y), -1)

    def _weingarten(self, y, nvec):
        c = -np.einsum("njk,njk->nj", self._pairs(nvec), self._pairs(y)) / self.radii**2
        S = np.zeros((len(y), self.ambient_dim, self.ambient_dim))
        idx = np.arange(self.ambient_dim)
        S[:, idx, idx] = np.repeat(c, 2, axis=1)
        return S

    def sample(self, n, rng):
        th = rng.uniform(0, 2 * np.pi, (n, self.dim))
        out = np.stack([np.cos(th), np.sin(th)], axis=2) * self.radii[None, :, None]
        return out.reshape(n, -1)


def make_target(kind: str, **params) -> TargetManifold:
    """Construct a built-in target by name."""
    kinds = {
        "round_sphere": RoundSphere,
        "sphere": RoundSphere,
        "ellipsoid": Ellipsoid,
        "flat_euclidean": FlatEuclidean,
        "euclidean": FlatEuclidean,
        "flat_torus": FlatTorus,
        "torus": FlatTorus,
    }
    if kind not in kinds:
        raise ValueError(f"unknown target kind {kind!r}; expected one of {sorted(kinds)}")
    if kind in ("round_sphere", "sphere"):
        if params.get("n", 2) not in (2, 3, 4):
            raise ValueError("round_sphere supports n = 2, 3, 4")
    return kinds[kind](**params)


# ---------------------------------------------------------------------------
# two-forms


def _fd_jacobian(fun, y, h):
    """Central differences of an array-valued function, derivative index last."""
    y2, single = _as2d(y)
    K = y2.shape[1]
    cols = []
    for k in range(K):
        e = np.zeros(K)
        e[k] = h
        cols.append((np.asarray(fun(y2 + e)) - np.asarray(fun(y2 - e))) / (2 * h))
    out = np.stack(cols, axis=-1)
    return _ret(out, single)


@dataclass(frozen=True)
class TwoFormField:
    """Ambient 2-form with coefficient callbacks.

    omega(y)    -> (..., K, K)        c_ij, antisymmetric
    d_omega(y)  -> (..., K, K, K)     [i, j, k] = d c_ij / d y^k
    dd_omega(y) -> (..., K, K, K, K)  [i, j, k, l] = d^2 c_ij / d y^k d y^l
    """

    K: int
    omega: Callable
    d_omega: Callable
    dd_omega: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def H_tensor(self, y):
        """H[..., k, i, j] = d_k c_ij + d_i c_jk + d_j c_ki."""
        dc = np.asarray(self.d_omega(y))  # dc[..., i, j, k] = d_k c_ij
        return (np.einsum("...ijk->...kij", dc) + np.einsum("...jki->...kij", dc)
                + np.einsum("...kij->...kij", dc))

    def dH_tensor(self, y):
        """dH[..., k, i, j, l] = d_l H^k_ij."""
        ddc = np.asarray(self.dd_omega(y))  # ddc[..., i, j, k, l] = d_l d_k c_ij
        return (np.einsum("...ijkl->...kijl", ddc) + np.einsum("...jkil->...kijl", ddc)
                + np.einsum("...kijl->...kijl", ddc))

    def induced_H(self, y, v1, v2):
        """H(v1, v2)^k = H^k_ij v1^i v2^j."""
        return np.einsum("...kij,...i,...j->...k", self.H_tensor(y), v1, v2)

    def grad_H(self, y, v1, v2, V):
        """<(D_V H)(v1, v2), V> with the flat ambient connection."""
        return np.einsum("...kijl,...l,...i,...j,...k->...", self.dH_tensor(y), V, v1, v2, V)

    def scaled(self, s: float) -> "TwoFormField":
        s = float(s)
        return TwoFormField(
            self.K,
            lambda y: s * np.asarray(self.omega(y)),
            lambda y: s * np.asarray(self.d_omega(y)),
            lambda y: s * np.asarray(self.dd_omega(y)),
            name=f"{s}*{self.name}",
            params={"scale": s, "base": self.params},
        )

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


def _batch_shape(y):
    y = np.asarray(y, dtype=float)
    return y, y.shape[:-1]


def zero_form(K: int) -> TwoFormField:
    def om(y):
        y, sh = _batch_shape(y)
        return np.zeros(sh + (K, K))

    def dom(y):
        y, sh = _batch_shape(y)
        return np.zeros(sh + (K,) * 3)

    def ddom(y):
        y, sh = _batch_shape(y)
        return np.zeros(sh + (K,) * 4)

    return TwoFormField(K, om, dom, ddom, name="zero", params={})


def linear_form(K: int, const=None, lin=None, name="linear") -> TwoFormField:
    """c_ij(y) = C_ij + L_ijk y^k.

    Only entries with i < j of ``const`` and ``lin`` are read; the lower
    triangle is filled by antisymmetry.
    """
    upper = np.triu(np.ones((K, K)), 1)
    C = np.zeros((K, K)) if const is None else np.asarray(const, float) * upper
    L = np.zeros((K, K, K)) if lin is None else np.asarray(lin, float) * upper[:, :, None]
    C = C - C.T
    L = L - np.swapaxes(L, 0, 1)

    def om(y):
        y, sh = _batch_shape(y)
        return C + np.einsum("ijk,...k->...ij", L, y)

    def dom(y):
        y, sh = _batch_shape(y)
        return np.broadcast_to(L, sh + L.shape).copy()

    def ddom(y):
        y, sh = _batch_shape(y)
        return np.zeros(sh + (K,) * 4)

    return TwoFormField(K, om, dom, ddom, name=name, params={"const": C.tolist(), "lin": L.tolist()})


def volume_form(K: int = 3, scale: float = 1.0, axes=(0, 1, 2)) -> TwoFormField:
    """Linear primitive of the volume form of the (a,b,c) coordinate 3-space.

    c_bc = s y^a / 3, c_ca = s y^b / 3, c_ab = s y^c / 3, so
    d omega = s dy^a ^ dy^b ^ dy^c and H^a_bc = s.
    """
    a, b, c = axes
    lin = np.zeros((K, K, K))
    s = float(scale) / 3.0
    for (i, j, k) in ((b, c, a), (c, a, b), (a, b, c)):
        if i < j:
            lin[i, j, k] += s
        else:
            lin[j, i, k] -= s
    f = linear_form(K, None, lin)
    return TwoFormField(
        K, f.omega, f.d_omega, f.dd_omega, name="volume",
        params={"scale": float(scale), "axes": list(axes)},
    )


def cmc_form(K: int = 3, H0: float = 1.0, axes=(0, 1, 2)) -> TwoFormField:
    """Volume-type form whose critical spheres in flat R^3 are round of radius 1/H0.

    With E(u) = 1/2 int |du|^2 + int u^*omega and omega = -2 H0 * (volume
    primitive), a conformal round sphere of radius R has
    E = 4 pi R^2 - (8 pi / 3) H0 R^3, stationary at R = 1 / H0.
    """
    f = volume_form(K, -2.0 * float(H0), axes)
    return TwoFormField(K, f.omega, f.d_omega, f.dd_omega, name="cmc", params={"H0": float(H0), "axes": list(axes)})


def cosine_form(K: int, amplitude: float = 1.0, wavevector=None, pattern=None) -> TwoFormField:
    """c_ij(y) = A P_ij cos(k . y) with fixed antisymmetric pattern P."""
    kvec = np.ones(K) if wavevector is None else np.asarray(wavevector, float)
    if pattern is None:
        P = np.zeros((K, K))
        for i in range(K):
            for j in range(i + 1, K):
                P[i, j] = 1.0 + 0.5 * i - 0.3 * j
        P = P - P.T
    else:
        P = np.asarray(pattern, float)
        P = 0.5 * (P - P.T)
    A = float(amplitude)

    def om(y):
        y = np.asarray(y, float)
        return A * np.cos(y @ kvec)[..., None, None] * P

    def dom(y):
        y = np.asarray(y, float)
        s = -A * np.sin(y @ kvec)
        return s[..., None, None, None] * P[:, :, None] * kvec

    def ddom(y):
        y = np.asarray(y, float)
        c = -A * np.cos(y @ kvec)
        return c[..., None, None, None, None] * P[:, :, None, None] * np.outer(kvec, kvec)

    return TwoFormField(
        K, om, dom, ddom, name="cosine",
        params={"amplitude": A, "wavevector": kvec.tolist(), "pattern": P.tolist()},
    )


def expression_form(K: int, components: dict, name="expression") -> TwoFormField:
    """Form from symbolic coefficient expressions in variables y0..y{K-1}.

    ``components`` maps "i,j" (i < j) to an expression string for c_ij;
    derivatives are taken symbolically.
    """
    import sympy

    ys = sympy.symbols(f"y0:{K}")
    loc = {f"y{i}": ys[i] for i in range(K)}
    C = [[sympy.Integer(0)] * K for _ in range(K)]
    for key, expr in components.items():
        i, j = (int(t) for t in str(key).replace(" ", "").split(","))
        if not (0 <= i < K and 0 <= j < K) or i == j:
            raise ValueError(f"bad component index {key!r}")
        e = sympy.sympify(expr, locals=loc)
        C[i][j] = e
        C[j][i] = -e
    D = [[[sympy.diff(C[i][j], ys[k]) for k in range(K)] for j in range(K)] for i in range(K)]
    DD = [[[[sympy.diff(D[i][j][k], ys[l]) for l in range(K)] for k in range(K)] for j in range(K)] for i in range(K)]

    def compile_(arr, shape):
        flat = list(np.array(arr, dtype=object).reshape(-1))
        fns = [sympy.lambdify(ys, e, "numpy") for e in flat]

        def f(y):
            y = np.asarray(y, float)
            args = [y[..., i] for i in range(K)]
            vals = [np.broadcast_to(np.asarray(fn(*args), float), y.shape[:-1]) for fn in fns]
            return np.stack(vals, axis=-1).reshape(y.shape[:-1] + shape)

        return f

    return TwoFormField(
        K,
        compile_(C, (K, K)),
        compile_(D, (K, K, K)),
        compile_(DD, (K, K, K, K)),
        name=name,
        params={"components": {str(k): str(v) for k, v in components.items()}},
    )


def callable_form(K: int, omega: Callable, d_omega: Callable | None = None, h: float = 1e-5,
                  name="callable") -> TwoFormField:
    """User form from a coefficient callback; missing derivatives use central differences."""
    if d_omega is None:
        d_omega = lambda y: _fd_jacobian(omega, y, h)
        # second level from a coarser step keeps the FD-of-FD error balanced
        dd = lambda y: _fd_jacobian(lambda z: _fd_jacobian(omega, z, 10 * h), y, 10 * h)
    else:
        dd = lambda y: _fd_jacobian(d_omega, y, h)
    return TwoFormField(K, omega, d_omega, dd, name=name, params={"fd_step": h})


def make_form(kind: str, K: int, **params) -> TwoFormField:
    if kind == "zero":
        return zero_form(K)
    if kind == "volume":
        return volume_form(K, **params)
    if kind == "cmc":
        return cmc_form(K, **params)
    if kind == "cosine":
        return cosine_form(K, **params)
    if kind == "linear":
        return linear_form(K, **params)
    if kind == "expression":
        return expression_form(K, **params)
    raise ValueError(f"unknown form kind {kind!r}")
