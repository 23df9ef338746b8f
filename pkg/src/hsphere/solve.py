"""Critical-point search: descent, Newton refinement, min-max, lambda scans, alpha continuation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import Functional, alpha_energy, omega_term
from .errors import (
    BudgetExhausted,
    InvalidSweepout,
    LineSearchStalled,
    MaxItersExceeded,
)
from .mesh import DomainMesh, icosphere, mobius_dilation

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
CONC_FACTOR = 50.0


@dataclass
class SolveReport:
    state: np.ndarray
    iterations: int
    grad_norm: float
    energy_trace: list
    grad_trace: list
    converged: bool
    status: str  # converged | max_iters | stalled
    method: str
    tol_grad: float

    @property
    def energy(self) -> float:
        return self.energy_trace[-1]

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "energy": self.energy,
            "converged": self.converged,
            "status": self.status,
            "method": self.method,
            "tol_grad": self.tol_grad,
        }


def _merge_reports(first: SolveReport, second: SolveReport) -> SolveReport:
    return SolveReport(
        state=second.state,
        iterations=first.iterations + second.iterations,
        grad_norm=second.grad_norm,
        energy_trace=first.energy_trace + second.energy_trace[1:],
        grad_trace=first.grad_trace + second.grad_trace[1:],
        converged=second.converged,
        status=second.status,
        method=f"{first.method}+{second.method}",
        tol_grad=second.tol_grad,
    )


class SobolevPreconditioner:
    """Applies (L + M)^{-1} componentwise, L the scalar stiffness and M the lumped mass."""

    def __init__(self, mesh: DomainMesh, weight: float = 1.0):
        A = (weight * mesh.stiffness + sp.diags(mesh.vertex_area)).tocsc()
        self._lu = spla.splu(A)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.ascontiguousarray(r))


def _finish(report: SolveReport, raise_on_failure: bool) -> SolveReport:
    if raise_on_failure and not report.converged:
        exc = MaxItersExceeded if report.status == "max_iters" else LineSearchStalled
        err = exc(f"{report.method} stopped with status {report.status}, |G| = {report.grad_norm:.3e}")
        err.report = report
        raise err
    return report


def _descent(fun: Functional, u0, tol_grad, max_iters, method, max_disp, raise_on_failure):
    u = np.array(u0, dtype=float)
    target, mesh = fun.target, fun.mesh
    prec = SobolevPreconditioner(mesh) if method == "sobolev" else None
    E = fun.energy(u)
    e = fun.ambient_gradient(u)
    G = target.tangent_project(u, e, check=False) / mesh.vertex_area[:, None]
    gn = fun.mass_norm(G)
    energies, grads = [E], [gn]
    t_prev = 1.0
    status = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        if gn <= tol_grad:
            status = "converged"
            it -= 1
            break
        if prec is not None:
            d = -target.tangent_project(u, prec(target.tangent_project(u, e, check=False)), check=False)
            slope = float(np.sum(e * d))
            if not slope < 0:
                d = -G
                slope = float(np.sum(e * d))
        else:
            d = -G
            slope = float(np.sum(e * d))
        dmax = float(np.max(np.linalg.norm(d, axis=1)))
        t = min(2.0 * t_prev, max_disp / dmax) if dmax > 0 else 0.0
        accepted = False
        while t * dmax > 1e-16 * target.scale:
            try:
                un = fun.retract(u, t * d)
                En = fun.energy(un)
            except Exception:  # noqa: BLE001 - leaving the tubular neighborhood just shrinks the step
                En = np.inf
            if En <= E + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= BACKTRACK
        if not accepted:
            status = "stalled"
            it -= 1
            break
        t_prev = t
        u, E = un, En
        e = fun.ambient_gradient(u)
        G = target.tangent_project(u, e, check=False) / mesh.vertex_area[:, None]
        gn = fun.mass_norm(G)
        energies.append(E)
        grads.append(gn)
    else:
        if gn <= tol_grad:
            status = "converged"
    rep = SolveReport(u, it, gn, energies, grads, status == "converged", status, method, tol_grad)
    return _finish(rep, raise_on_failure)


def newton_refine(fun: Functional, u0, tol_grad=1e-6, max_iters=50, mu0=1e-6, mu_min=1e-10,
                  max_disp=None, raise_on_failure=False) -> SolveReport:
    """Levenberg-Marquardt Newton iteration on the critical-point equation.

    Steps solve (A + mu M) x = -g in per-vertex tangent coordinates, where A is
    the second variation and M the lumped mass.  A step is accepted when it
    lowers the gradient norm, so saddle points are reachable; the energy is not
    required to decrease.
    """
    u = np.array(u0, dtype=float)
    target = fun.target
    max_disp = 0.25 * target.scale if max_disp is None else max_disp
    gn = fun.grad_norm(u)
    energies, grads = [fun.energy(u)], [gn]
    mu = mu0
    status = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        if gn <= tol_grad:
            status = "converged"
            it -= 1
            break
        A, M, T = fun.reduced_hessian(u)
        g = T.T @ fun.ambient_gradient(u).reshape(-1)
        accepted = False
        for _ in range(40):
            try:
                x = spla.splu((A + mu * M).tocsc()).solve(-g)
            except RuntimeError:  # exactly singular factorization
                mu = max(10.0 * mu, 1e-12)
                continue
            V = (T @ x).reshape(u.shape)
            vmax = float(np.max(np.linalg.norm(V, axis=1)))
            if vmax > max_disp:
                V *= max_disp / vmax
            try:
                un = fun.retract(u, V)
                gnn = fun.grad_norm(un)
            except Exception:  # noqa: BLE001
                gnn = np.inf
            if np.isfinite(gnn) and gnn < gn:
                accepted = True
                break
            mu = max(8.0 * mu, 1e-12)
        if not accepted:
            status = "stalled"
            it -= 1
            break
        u, gn = un, gnn
        mu = max(mu / 4.0, mu_min)
        energies.append(fun.energy(u))
        grads.append(gn)
    else:
        if gn <= tol_grad:
            status = "converged"
    rep = SolveReport(u, it, gn, energies, grads, status == "converged", status, "newton", tol_grad)
    return _finish(rep, raise_on_failure)


def descend(fun: Functional, u0, tol_grad: float = 1e-6, max_iters: int = 500, method: str = "sobolev",
            max_disp: float | None = None, raise_on_failure: bool = False, **newton_kw) -> SolveReport:
    """Find a critical point starting from u0.

    method:
      "gradient" - projected steepest descent in the lumped-mass metric, Armijo backtracking;
      "sobolev"  - same with the (stiffness + mass) preconditioned direction;
      "newton"   - Levenberg-Marquardt Newton (reaches saddles, energy not monotone);
      "auto"     - sobolev descent to 1e3 * tol_grad, then newton.
    Iterates are retracted onto the target by nearest-point projection.
    """
    u0 = fun.target.project_point(np.asarray(u0, float))
    if max_disp is None:
        max_disp = 0.1 * min(fun.target.scale, fun.target.tubular_radius)
    if method in ("gradient", "sobolev"):
        return _descent(fun, u0, tol_grad, max_iters, method, max_disp, raise_on_failure)
    if method == "newton":
        return newton_refine(fun, u0, tol_grad, max_iters, raise_on_failure=raise_on_failure, **newton_kw)
    if method == "auto":
        first = _descent(fun, u0, max(1e3 * tol_grad, 1e-4), max_iters, "sobolev", max_disp, False)
        second = newton_refine(fun, first.state, tol_grad, max(max_iters // 10, 30), **newton_kw)
        return _finish(_merge_reports(first, second), raise_on_failure)
    raise ValueError(f"unknown method {method!r}")


# sweepouts and min-max


@dataclass
class SweepoutGrid:
    """One-parameter family of maps with constant endpoint maps."""

    ts: np.ndarray
    states: list
    dim: int = 1

    def __post_init__(self):
        self.ts = np.asarray(self.ts, float)
        if self.dim != 1:
            raise InvalidSweepout(f"only one-parameter sweepouts are supported, got dim={self.dim}")
        if len(self.states) != len(self.ts):
            raise InvalidSweepout("need one state per parameter sample")
        if len(self.ts) < 9:
            raise InvalidSweepout(f"need at least 9 samples (m >= 8), got {len(self.ts)}")
        if np.any(np.diff(self.ts) <= 0) or self.ts[0] != 0.0 or self.ts[-1] != 1.0:
            raise InvalidSweepout("parameters must increase from 0 to 1")
        for k in (0, -1):
            if not is_constant_map(self.states[k]):
                raise InvalidSweepout("endpoint maps must be constant")
        if all(is_constant_map(s) for s in self.states):
            raise InvalidSweepout("every map in the family is constant")

    @property
    def m(self) -> int:
        return len(self.ts) - 1


def is_constant_map(u, tol: float = 1e-12) -> bool:
    u = np.asarray(u, float)
    scale = max(1.0, float(np.max(np.abs(u))))
    return bool(np.max(np.abs(u - u[0])) <= tol * scale)


def latitude_sweepout(mesh: DomainMesh, target, m: int = 16, radius: float | None = None,
                      zoom: float = 1.0, center=None) -> SweepoutGrid:
    """Latitude family t -> round spheres.

    Round S^n (n >= 3): sigma(t)(x) = r (sin(pi t) x, 0, ..., cos(pi t)).
    Flat R^3:           sigma(t)(x) = R sin(pi t) x.
    ``zoom`` < 1 precomposes with a domain Mobius dilation that concentrates
    the parametrization at ``center`` (a point of the domain sphere).
    """
    x = mesh.vertices
    if zoom != 1.0:
        c = np.array([0.0, 0.0, 1.0]) if center is None else np.asarray(center, float)
        x = mobius_dilation(c, 1.0 / zoom, x)
    ts = np.linspace(0.0, 1.0, m + 1)
    states = []
    if target.kind == "round_sphere" and target.dim >= 3:
        r = target.radius if radius is None else radius
        K = target.ambient_dim
        for t in ts:
            u = np.zeros((len(x), K))
            u[:, :3] = math.sin(math.pi * t) * x
            u[:, -1] = math.cos(math.pi * t)
            states.append(target.center + r * u)
        states[0] = np.tile(target.center + r * np.eye(K)[-1], (len(x), 1))
        states[-1] = np.tile(target.center - r * np.eye(K)[-1], (len(x), 1))
    elif target.kind == "flat_euclidean" and target.ambient_dim == 3:
        R = 1.0 if radius is None else radius
        for t in ts:
            states.append(R * math.sin(math.pi * t) * x)
        states[0] = np.zeros_like(x)
        states[-1] = np.zeros_like(x)
    else:
        raise ValueError(f"latitude sweepout not defined for {target!r}")
    return SweepoutGrid(ts, states)


@dataclass
class MinmaxResult:
    width: float
    state: np.ndarray
    index: int
    energies: np.ndarray
    width_trace: list
    sweeps: int
    budget_exhausted: bool
    converged: bool
    grad_norm: float
    sweepout: SweepoutGrid
    polish: SolveReport | None = None

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "max_index": self.index,
            "max_t": float(self.sweepout.ts[self.index]),
            "sweeps": self.sweeps,
            "budget_exhausted": self.budget_exhausted,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "energies": [float(v) for v in self.energies],
            "polish": None if self.polish is None else self.polish.to_dict(),
        }


def _argmax_lowest(vals) -> int:
    vals = np.asarray(vals)
    return int(np.flatnonzero(vals == vals.max())[0])


def _reparametrize(fun: Functional, states, lo: int, hi: int):
    """Redistribute states lo..hi (endpoints kept) at equal mass-norm arclength."""
    if hi - lo < 2:
        return
    seg = [states[j] for j in range(lo, hi + 1)]
    d = np.array([fun.mass_norm(seg[j + 1] - seg[j]) for j in range(len(seg) - 1)])
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0:
        return
    targets = np.linspace(0.0, s[-1], len(seg))
    new = []
    for k in range(1, len(seg) - 1):
        j = min(int(np.searchsorted(s, targets[k], side="right")) - 1, len(seg) - 2)
        w = (targets[k] - s[j]) / d[j] if d[j] > 0 else 0.0
        new.append(fun.target.project_point((1 - w) * seg[j] + w * seg[j + 1]))
    for k, u in enumerate(new, start=1):
        states[lo + k] = u


def minmax_width(fun: Functional, sweepout: SweepoutGrid, budget: int = 200, steps_per_sweep: int = 1,
                 step: float = 0.5, max_disp: float | None = None, tol_grad: float = 1e-6,
                 string_tol: float = 1e-3, polish: bool = True, raise_on_budget: bool = False) -> MinmaxResult:
    """Relax a sweepout toward a mountain-pass critical point and estimate the width.

    Each sweep moves every interior sample by bounded Sobolev-preconditioned
    steps: samples descend orthogonally to the path tangent, while the current
    maximum (lowest index on ties) climbs along it.  Samples on each side of
    the maximum are then redistributed at equal spacing.  Endpoints never
    move.  Once the climbing sample's gradient norm is below ``string_tol`` it
    is refined by Newton iteration to ``tol_grad``.
    """
    states = [np.array(s, float) for s in sweepout.states]
    mesh, target = fun.mesh, fun.target
    prec = SobolevPreconditioner(mesh)
    max_disp = 0.05 * min(target.scale, target.tubular_radius) if max_disp is None else max_disp
    energies = np.array([fun.energy(s) for s in states])
    trace = [float(energies.max())]
    c = _argmax_lowest(energies[1:-1]) + 1
    gn = fun.grad_norm(states[c])
    sweeps = 0
    while gn > string_tol and sweeps < budget:
        sweeps += 1
        c = _argmax_lowest(energies[1:-1]) + 1
        for _ in range(steps_per_sweep):
            new = list(states)
            for i in range(1, len(states) - 1):
                u = states[i]
                e = fun.ambient_gradient(u)
                d = -target.tangent_project(u, prec(target.tangent_project(u, e, check=False)), check=False)
                tan = target.tangent_project(u, states[i + 1] - states[i - 1], check=False)
                tn = fun.mass_norm(tan)
                if tn > 0:
                    tan = tan / tn
                    comp = fun.mass_inner(d, tan)
                    d = d - (2.0 if i == c else 1.0) * comp * tan
                dmax = float(np.max(np.linalg.norm(d, axis=1)))
                if dmax == 0:
                    continue
                h = min(step, max_disp / dmax)
                new[i] = fun.retract(u, h * d)
            states = new
        _reparametrize(fun, states, 0, c)
        _reparametrize(fun, states, c, len(states) - 1)
        energies = np.array([fun.energy(s) for s in states])
        c = _argmax_lowest(energies[1:-1]) + 1
        gn = fun.grad_norm(states[c])
        trace.append(float(energies.max()))
        log.debug("sweep %d: max E %.8f at %d, |G| %.3e", sweeps, energies[c], c, gn)
    exhausted = gn > string_tol
    relaxed = SweepoutGrid(sweepout.ts.copy(), states)
    pol = None
    state, width = states[c], float(energies[c])
    if polish and not exhausted:
        pol = newton_refine(fun, states[c], tol_grad=tol_grad)
        if pol.converged:
            state, width, gn = pol.state, pol.energy, pol.grad_norm
    converged = gn <= tol_grad if polish else gn <= string_tol
    res = MinmaxResult(width, state, c, energies, trace, sweeps, exhausted, bool(converged), float(gn), relaxed, pol)
    if exhausted and raise_on_budget:
        raise BudgetExhausted(f"min-max budget of {budget} sweeps exhausted (|G| = {gn:.3e})", result=res)
    return res


# lambda scan


def lambda_scan(fun: Functional, sweepout, alphas, lambdas) -> list:
    """Width surrogates of a frozen family over an (alpha, lambda) grid.

    ``sweepout`` is a SweepoutGrid or any sequence of states (a single map is
    the degenerate family).  The ratio is evaluated as
    max_t (E_alpha / lam + Omega), which makes it non-increasing in lam in
    floating point as well as in exact arithmetic.
    """
    states = sweepout.states if isinstance(sweepout, SweepoutGrid) else list(sweepout)
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be positive and strictly increasing")
    mesh = fun.mesh
    omegas = np.array([omega_term(mesh, s, fun.form) for s in states])
    rows = []
    for a in alphas:
        p = fun.params.replace(alpha=float(a), lam=1.0)
        w_tau = p.tau ** (p.alpha - 1.0)
        ealpha = np.array([alpha_energy(mesh, s, p) for s in states])
        for lam in lambdas:
            full = ealpha + lam * w_tau * omegas
            ratio = ealpha / lam + w_tau * omegas
            k = _argmax_lowest(ratio)
            rows.append({
                "alpha": float(a),
                "lambda": lam,
                "width": float(full.max()),
                "ratio": float(ratio[k]),
                "argmax": int(k),
            })
    return rows


# alpha continuation and bubbles


@dataclass
class BubbleReport:
    alpha: float
    vertex: int
    center: np.ndarray
    lambda_alpha: float
    mu: float
    nu: float
    bubble_energy: float
    neck_length: float
    neck_radius: float
    base_energy: float
    density_ratio: float
    bubble_state: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "vertex": self.vertex,
            "center": [float(v) for v in self.center],
            "lambda_alpha": self.lambda_alpha,
            "mu": self.mu,
            "nu": self.nu,
            "bubble_energy": self.bubble_energy,
            "neck_length": self.neck_length,
            "neck_radius": self.neck_radius,
            "base_energy": self.base_energy,
            "density_ratio": self.density_ratio,
        }


def blowup_spectra(lambda_alpha: float, alpha: float):
    """mu = lambda^(2 - 2 alpha), nu = lambda^(-sqrt(alpha - 1))."""
    mu = lambda_alpha ** (2.0 - 2.0 * alpha)
    nu = lambda_alpha ** (-math.sqrt(max(alpha - 1.0, 0.0)))
    return mu, nu


def neck_length(bubble_energy: float, nu: float) -> float:
    """Length of the connecting geodesic, sqrt(E(w) / pi) log nu."""
    return math.sqrt(max(bubble_energy, 0.0) / math.pi) * math.log(nu) if nu > 0 else math.inf


def zoom_state(mesh: DomainMesh, target, u, center, scale: float, out_mesh: DomainMesh | None = None):
    """Resample w(x) = u(M(x)), M the Mobius dilation z -> scale * z at ``center``."""
    out_mesh = mesh if out_mesh is None else out_mesh
    pts = mobius_dilation(center, scale, out_mesh.vertices)
    w = mesh.interpolate(u, pts)
    return target.project_point(w)


def detect_bubbles(fun: Functional, u, conc_factor: float = CONC_FACTOR, max_bubbles: int = 4,
                   gap_threshold: float = 0.0, resample: bool = True) -> list:
    """Concentration events of the vertex energy density, with blow-up data."""
    mesh, target = fun.mesh, fun.target
    alpha = fun.params.alpha
    dens = mesh.vertex_energy_density(u)
    med = float(np.median(dens))
    s_tri = mesh.energy_density(u)
    bubbles = []
    excluded = np.zeros(mesh.n_vertices, dtype=bool)
    fresh = icosphere(mesh.subdivisions) if (resample and mesh.subdivisions is not None) else mesh
    for _ in range(max_bubbles):
        cand = np.where(excluded, -np.inf, dens)
        v = int(np.argmax(cand))
        ratio = float(cand[v] / med) if med > 0 else (np.inf if cand[v] > 0 else 0.0)
        if not ratio > conc_factor:
            break
        c = mesh.vertices[v]
        dist_tri = mesh.geodesic_distance(c, mesh.barycenters)
        near = dist_tri < max(4.0 * mesh.mean_edge_length, 0.3)
        gmax = float(np.sqrt(np.max(s_tri[near])))
        lam = 1.0 / gmax
        mu, nu = blowup_spectra(lam, alpha)
        delta = 2.0 * math.atan(math.sqrt(lam))
        base_energy = mesh.annulus_energy(u, v, delta, math.pi)
        w = zoom_state(mesh, target, u, c, lam, fresh) if resample else None
        if w is not None:
            # the ball of radius delta around c corresponds to |z| <= 1 / sqrt(lam) in the bubble chart
            vw = int(np.argmax(fresh.vertices @ c))
            e_w = fresh.annulus_energy(w, vw, 0.0, 2.0 * math.atan(1.0 / math.sqrt(lam)))
        else:
            e_w = mesh.annulus_energy(u, v, 0.0, delta)
        bubbles.append(BubbleReport(
            alpha=alpha, vertex=v, center=c.copy(), lambda_alpha=lam, mu=mu, nu=nu,
            bubble_energy=e_w, neck_length=neck_length(e_w, nu), neck_radius=delta,
            base_energy=base_energy, density_ratio=ratio, bubble_state=w,
        ))
        excluded |= mesh.geodesic_distance(c, mesh.vertices) < 2.0 * delta
    return bubbles


@dataclass
class StageResult:
    alpha: float
    report: SolveReport
    bubbles: list
    alpha_energy: float
    dirichlet: float
    area: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "solve": self.report.to_dict(),
            "alpha_energy": self.alpha_energy,
            "dirichlet": self.dirichlet,
            "bubbles": [b.to_dict() for b in self.bubbles],
        }


@dataclass
class ContinuationResult:
    stages: list = field(default_factory=list)
    gap_threshold: float = 0.0

    @property
    def final(self) -> StageResult:
        return self.stages[-1]

    def to_dict(self) -> dict:
        stages = []
        for s in self.stages:
            d = s.to_dict()
            # base map stays away from constants while bubbles split off
            d["base_nonconstant"] = (all(b.base_energy >= self.gap_threshold for b in s.bubbles)
                                     if s.bubbles else None)
            stages.append(d)
        return {"stages": stages, "gap_threshold": self.gap_threshold}


def default_schedule(n: int = 10) -> list:
    return [1.0 + 2.0 ** (-j) for j in range(1, n + 1)]


def validate_schedule(schedule) -> list:
    sch = [float(a) for a in schedule]
    if not sch:
        raise ValueError("empty alpha schedule")
    if sch[0] > 1.5:
        raise ValueError(f"first alpha must be <= 1.5, got {sch[0]}")
    if any(a < 1.0 for a in sch):
        raise ValueError("alpha values must be >= 1")
    if any(b >= a for a, b in zip(sch, sch[1:])):
        raise ValueError("alpha schedule must be strictly decreasing")
    return sch


def alpha_continuation(fun: Functional, u0, schedule=None, tol_grad: float = 1e-6, max_iters: int = 200,
                       method: str = "newton", conc_factor: float = CONC_FACTOR, gap_threshold: float = 0.0,
                       raise_on_failure: bool = False, **solve_kw) -> ContinuationResult:
    """Warm-started solves along a decreasing alpha schedule with concentration detection."""
    sch = validate_schedule(default_schedule() if schedule is None else schedule)
    out = ContinuationResult(gap_threshold=gap_threshold)
    u = np.asarray(u0, float)
    for a in sch:
        f = fun.with_params(alpha=a)
        rep = descend(f, u, tol_grad=tol_grad, max_iters=max_iters, method=method,
                      raise_on_failure=raise_on_failure, **solve_kw)
        u = rep.state
        bubbles = detect_bubbles(f, u, conc_factor=conc_factor, gap_threshold=gap_threshold)
        out.stages.append(StageResult(
            alpha=a, report=rep, bubbles=bubbles,
            alpha_energy=alpha_energy(f.mesh, u, f.params),
            dirichlet=f.mesh.dirichlet(u), area=f.mesh.area,
        ))
        log.info("alpha %.6g: E=%.8f |G|=%.2e bubbles=%d", a, out.stages[-1].alpha_energy, rep.grad_norm, len(bubbles))
    return out
