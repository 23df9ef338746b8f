"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line."""

import filecmp
import json
import time

import numpy as np
import pytest

import oracles
from conftest import TARGET_SPECS, build_target, random_state
from hsphere import cli
from hsphere.config import build_functional, build_initial_state, load_config
from hsphere.diagnose import balancing_relative, pohozaev_residual
from hsphere.energy import (Functional, FunctionalParams, alpha_energy, fd_directional_derivative,
                            random_tangent_field)
from hsphere.mesh import icosphere, jittered_icosphere, mobius_dilation
from hsphere.solve import descend, lambda_scan, latitude_sweepout, newton_refine
from hsphere.spectrum import b_omega_index, morse_index
from hsphere.target import cosine_form, make_form, make_target, volume_form, zero_form

pytestmark = pytest.mark.acceptance

RESULTS = {}


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def loglog_order(h, r):
    return float(np.polyfit(np.log(h), np.log(r), 1)[0])


# shared regression runs


@pytest.fixture(scope="module")
def equator_run():
    cfg = load_config("configs/s3_equator.yaml")
    fun = build_functional(cfg)
    t0 = time.time()
    rep = descend(fun, build_initial_state(cfg, fun), tol_grad=1e-6, max_iters=60, method="newton")
    spec = morse_index(fun, rep.state)
    return fun, rep, spec, time.time() - t0


@pytest.fixture(scope="module")
def cmc_run():
    cfg = load_config("configs/cmc_r3.yaml")
    fun = build_functional(cfg)
    rep = descend(fun, build_initial_state(cfg, fun), tol_grad=1e-6, max_iters=60, method="newton")
    return fun, rep


def test_criterion_1_derivatives():
    rng = np.random.default_rng(2024)
    mesh = icosphere(3)
    t0 = time.time()
    worst_g = worst_h = 0.0
    for name in TARGET_SPECS:
        target = build_target(name)
        K = target.ambient_dim
        for form in (zero_form(K), volume_form(K, 0.8), cosine_form(K, 0.6)):
            for trial in range(20):
                params = FunctionalParams(alpha=1.0 + 0.5 * (trial % 3 == 2), lam=0.7)
                fun = Functional(mesh, target, form, params)
                u = random_state(mesh, target, rng)
                V = random_tangent_field(fun, u, rng)
                W = random_tangent_field(fun, u, rng)
                g = fun.gradient(u)
                fd = fd_directional_derivative(fun, u, V)
                # mass-normalized: |<G, V> - FD| / (|G| |V|)
                worst_g = max(worst_g, abs(fun.mass_inner(g, V) - fd) / (fun.mass_norm(g) * fun.mass_norm(V)))
                LV, LW = fun.hessian_apply(u, V), fun.hessian_apply(u, W)
                a, b = fun.mass_inner(LV, W), fun.mass_inner(V, LW)
                worst_h = max(worst_h, abs(a - b) / (fun.mass_norm(LV) * fun.mass_norm(W)))
    dt = time.time() - t0
    ok = worst_g <= 1e-6 and worst_h <= 1e-8 and dt < 60
    verdict(1, ok, f"grad rel {worst_g:.1e} (<=1e-6), hessian asym {worst_h:.1e} (<=1e-8), {dt:.1f}s (<60s)")


def test_criterion_2_minimal_sphere(equator_run):
    fun, rep, spec, dt = equator_run
    E = fun.mesh.dirichlet(rep.state)
    rel = abs(E - oracles.EQUATOR_ENERGY) / oracles.EQUATOR_ENERGY
    ok = (rep.grad_norm <= 1e-6 and rel <= 0.01 and spec.morse_index == oracles.EQUATOR_MORSE_INDEX
          and spec.nullity == oracles.EQUATOR_NULLITY_GAUGED and dt < 300)
    verdict(2, ok, f"|G| {rep.grad_norm:.1e}, energy err {rel:.2%}, index {spec.morse_index} "
                   f"(oracle {oracles.EQUATOR_MORSE_INDEX}), nullity {spec.nullity}, {dt:.0f}s")


def test_criterion_3_cmc_sphere(cmc_run):
    fun, rep = cmc_run
    u = rep.state
    c = u.mean(axis=0)
    rad = np.linalg.norm(u - c, axis=1)
    err = float(np.max(np.abs(rad - oracles.CMC_RADIUS)) / oracles.CMC_RADIUS)
    ok = err <= 0.02 and rep.grad_norm <= 1e-3
    verdict(3, ok, f"radius error {err:.2e} (<=2%), EL residual {rep.grad_norm:.1e} (<=1e-3)")


def test_criterion_4_lambda_monotonicity():
    mesh = icosphere(3)
    target = make_target("flat_euclidean", K=3)
    fun = Functional(mesh, target, make_form("cmc", 3, H0=1.0), FunctionalParams(alpha=1.2))
    lams = [0.5, 1.0, 2.0, 4.0, 8.0]
    u = mesh.vertices * np.array([1.0, 0.8, 0.7])
    worst = 0.0
    rows = lambda_scan(fun, [u], [1.2], lams)
    e = alpha_energy(mesh, u, fun.params)
    for r1, r2 in zip(rows, rows[1:]):
        exact = oracles.ratio_difference(e, r1["lambda"], r2["lambda"])
        worst = max(worst, abs((r1["ratio"] - r2["ratio"]) - exact) / abs(exact))
    sw = latitude_sweepout(mesh, target, m=16, radius=1.6)
    ratios = [r["ratio"] for r in lambda_scan(fun, sw, [1.2], lams)]
    mono = all(b <= a for a, b in zip(ratios, ratios[1:]))
    ok = worst <= 1e-12 and mono
    verdict(4, ok, f"identity rel err {worst:.1e} (<=1e-12), W/lambda non-increasing: {mono}")


def test_criterion_5_identity_convergence():
    target = make_target("round_sphere", n=2)
    c = np.array([0.3, 0.5, 0.8]) / np.linalg.norm([0.3, 0.5, 0.8])
    radii = np.linspace(0.2, 1.5, 14)
    h, poh, bal = [], [], []
    hj = []
    for s in (3, 4, 5):
        mesh = icosphere(s, rotation=1)
        u = mobius_dilation(c, 1.7, mesh.vertices)
        r = np.array(pohozaev_residual(Functional(mesh, target), u, 0, radii))
        h.append(mesh.mean_edge_length)
        poh.append(float(np.sqrt(np.mean(r**2))))
        # balancing needs a mesh without antipodal symmetry (otherwise it vanishes identically)
        jm = jittered_icosphere(s, 0.2, seed=7)
        f = Functional(jm, target, params=FunctionalParams(alpha=1.2))
        st = newton_refine(f, jm.vertices.copy(), tol_grad=1e-9, max_iters=40).state
        hj.append(jm.mean_edge_length)
        bal.append(balancing_relative(jm, st, f.params))
    p1, p2 = loglog_order(h, poh), loglog_order(hj, bal)
    ok = p1 >= 0.9 and p2 >= 0.9
    verdict(5, ok, f"Pohozaev order {p1:.2f}, balancing order {p2:.2f} (both >=0.9)")


def test_criterion_6_index_comparison(equator_run, cmc_run):
    runs = {"S3 equator": (equator_run[0], equator_run[1]), "R3 CMC": cmc_run}
    violations, parts = [], []
    for name, (fun, rep) in runs.items():
        assert rep.converged
        mi = morse_index(fun, rep.state)
        bi = b_omega_index(fun, rep.state)
        parts.append(f"{name}: B {bi.index} <= Morse {mi.morse_index}")
        if bi.index > mi.morse_index:
            violations.append(name)
    verdict(6, not violations, "; ".join(parts) + f"; violations {len(violations)}")


def test_criterion_7_bubbling(tmp_path):
    code = cli.main(["continue", "--config", "configs/cmc_continuation.yaml", "--out", str(tmp_path), "--quiet"])
    assert code == 0
    res = json.loads((tmp_path / "report.json").read_text())["result"]
    final = res["continuation"]["stages"][-1]
    events = res["concentration_events"]
    bub = final["bubbles"]
    total = final["alpha_energy"]
    ok = (events >= 1 and bool(bub) and all(1 <= b["mu"] <= 5 and b["nu"] >= 1 for b in bub)
          and abs(res["energy_identity_defect"]) <= 0.1 * total)
    verdict(7, ok, f"concentration events {events} (>=1), final-stage bubbles {len(bub)}, "
                   f"identity defect {res['energy_identity_defect']:.3g} of {total:.3g}")


def test_criterion_8_determinism(tmp_path):
    outs = []
    for k, threads in enumerate((1, 2)):
        out = tmp_path / f"run{k}"
        assert cli.main(["solve", "--config", "configs/cmc_r3.yaml", "--out", str(out), "--seed", "7",
                         "--threads", str(threads), "--quiet"]) == 0
        outs.append(out / "state.txt")
    same = filecmp.cmp(outs[0], outs[1], shallow=False)
    r = [json.loads((p.parent / "report.json").read_text()) for p in outs]
    same_report = r[0]["result"] == r[1]["result"] and r[0]["config"] == r[1]["config"]
    verdict(8, same and same_report, f"state files identical: {same}, reports identical: {same_report}")

