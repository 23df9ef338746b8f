"""Command-line front end.

    hsphere <command> --config run.yaml --out results/ [--seed N] [--threads N] [--quiet]

Every command writes ``report.json`` (resolved config, results, and a
separate metadata block holding everything that varies between identical
runs), CSV tables and PNG figures into the output directory.  Exit status:
0 ok, 2 configuration, 3 solver, 4 input/output.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import io as hio
from . import plotting
from .diagnose import diagnose, energy_identity_defect
from .energy import alpha_energy, omega_term
from .errors import (
    ConfigParse,
    FormatError,
    HSphereError,
    MeshMismatch,
    NotNearCritical,
    SubdivisionOutOfRange,
    ValidationFailed,
)
from .solve import (
    alpha_continuation,
    default_schedule,
    descend,
    lambda_scan,
    latitude_sweepout,
    minmax_width,
)
from .mesh import icosphere
from .spectrum import b_omega_index, energy_bound_check, morse_index

COMMANDS = ("solve", "minmax", "continue", "index", "bomega", "diagnose", "scan-lambda", "mesh-export")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("hsphere")


def exit_status(exc: BaseException) -> int:
    if isinstance(exc, (ConfigParse, ValidationFailed, SubdivisionOutOfRange)):
        return EXIT_CONFIG
    if isinstance(exc, (FormatError, MeshMismatch, OSError)):
        return EXIT_IO
    return EXIT_SOLVER


def _error_code(exc: BaseException) -> str:
    if isinstance(exc, HSphereError):
        return exc.code
    if isinstance(exc, OSError):
        return "io_error"
    return "internal_error"


# commands; each returns (result dict, {label: artifact path})


def _solve_state(cfg, fun, u0):
    s = cfg["solver"]
    return descend(fun, u0, tol_grad=float(s["tol_grad"]), max_iters=int(s["max_iters"]), method=s["method"])


def _state_input(cfg, fun):
    """State for the analysis commands: diagnose.state, else the init section."""
    path = cfg["diagnose"]["state"]
    if path:
        return fun.target.project_point(hio.load_state(path, fun.mesh))
    return cfgmod.build_initial_state(cfg, fun)


def cmd_solve(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    u0 = cfgmod.build_initial_state(cfg, fun)
    rep = _solve_state(cfg, fun, u0)
    arts = {
        "state": hio.save_state(out / "state.txt", fun.mesh, rep.state),
        "trace_csv": hio.write_csv(out / "trace.csv", [
            {"iteration": i, "energy": e, "grad_norm": g}
            for i, (e, g) in enumerate(zip(rep.energy_trace, rep.grad_trace))]),
        "trace_png": plotting.plot_trace(out / "trace.png", rep.energy_trace, rep.grad_trace),
        "image_png": plotting.plot_state(out / "state.png", fun.mesh, rep.state),
    }
    res = {"solve": rep.to_dict(), "energy_parts": fun.parts(rep.state)}
    return res, arts


def cmd_minmax(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    mm = cfg["minmax"]
    sw = latitude_sweepout(fun.mesh, fun.target, m=int(mm["samples"]), radius=mm["radius"], zoom=float(mm["zoom"]))
    e0 = [fun.energy(s) for s in sw.states]
    r = minmax_width(fun, sw, budget=int(mm["budget"]), string_tol=float(mm["string_tol"]),
                     tol_grad=float(cfg["solver"]["tol_grad"]))
    floor = 0.5 * fun.mesh.area * fun.params.tau ** fun.params.alpha
    arts = {
        "state": hio.save_state(out / "state.txt", fun.mesh, r.state),
        "sweepout_csv": hio.write_csv(out / "sweepout.csv", [
            {"t": t, "energy_initial": a, "energy_relaxed": b} for t, a, b in zip(sw.ts, e0, r.energies)]),
        "width_csv": hio.write_csv(out / "width_trace.csv", [
            {"sweep": i, "max_energy": w} for i, w in enumerate(r.width_trace)]),
        "sweepout_png": plotting.plot_sweepout(out / "sweepout.png", sw.ts, e0, r.energies, floor),
        "image_png": plotting.plot_state(out / "state.png", fun.mesh, r.state),
    }
    res = {"minmax": r.to_dict(), "area_floor": floor, "width_above_floor": r.width - floor}
    return res, arts


def cmd_continue(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    sch = cfg["functional"]["schedule"] or default_schedule()
    co = cfg["continuation"]
    s = cfg["solver"]
    start = None
    f0 = fun.with_params(alpha=sch[0])
    if co["minmax_start"] and cfg["init"]["kind"] != "file":
        mm = cfg["minmax"]
        sw = latitude_sweepout(fun.mesh, fun.target, m=int(mm["samples"]), radius=mm["radius"],
                               zoom=float(mm["zoom"]))
        start = minmax_width(f0, sw, budget=int(mm["budget"]), string_tol=float(mm["string_tol"]),
                             tol_grad=float(s["tol_grad"]))
        u0 = start.state
    else:
        u0 = cfgmod.build_initial_state(cfg, fun)
    cont = alpha_continuation(fun, u0, sch, tol_grad=float(s["tol_grad"]), max_iters=int(s["max_iters"]),
                              method=s["method"], conc_factor=float(co["conc_factor"]),
                              gap_threshold=float(co["gap_threshold"]))
    stages = [st.to_dict() for st in cont.stages]
    rows = []
    for st in cont.stages:
        rows.append({"alpha": st.alpha, "alpha_energy": st.alpha_energy, "dirichlet": st.dirichlet,
                     "grad_norm": st.report.grad_norm, "converged": st.report.converged,
                     "bubbles": len(st.bubbles)})
    brow = [dict(b.to_dict(), stage_alpha=st.alpha) for st in cont.stages for b in st.bubbles]
    arts = {
        "state": hio.save_state(out / "state.txt", fun.mesh, cont.final.report.state),
        "stages_csv": hio.write_csv(out / "stages.csv", rows),
        "continuation_png": plotting.plot_continuation(out / "continuation.png", stages),
    }
    if brow:
        arts["bubbles_csv"] = hio.write_csv(out / "bubbles.csv", [
            {k: v for k, v in b.items() if k != "center"} for b in brow])
        for i, b in enumerate(cont.final.bubbles):
            if b.bubble_state is not None:
                # bubbles are resampled on an unrotated icosphere of the same level
                arts[f"bubble_{i}"] = hio.save_state(out / f"bubble_{i}.txt", icosphere(fun.mesh.subdivisions),
                                                     b.bubble_state)
    res = {
        "schedule": sch,
        "minmax_start": None if start is None else start.to_dict(),
        "continuation": cont.to_dict(),
        "energy_identity_defect": energy_identity_defect(cont),
        "concentration_events": sum(len(st.bubbles) for st in cont.stages),
    }
    return res, arts


def cmd_index(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    u = _state_input(cfg, fun)
    ix = cfg["index"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NotNearCritical)
        rep = morse_index(fun, u, tol_eig=ix["tol_eig"], n_eig=int(ix["n_eig"]), crit_tol=float(ix["crit_tol"]),
                          gauge=ix["gauge"])
    arts = {
        "eigen_csv": hio.write_csv(out / "eigenvalues.csv", [
            {"k": k, "eigenvalue": w} for k, w in enumerate(rep.eigenvalues)]),
        "spectrum_png": plotting.plot_spectrum(out / "spectrum.png", rep.eigenvalues, rep.tol_eig),
    }
    res = {"spectrum": rep.to_dict(), "warnings": [str(w.message) for w in caught]}
    return res, arts


def cmd_bomega(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    u = _state_input(cfg, fun)
    bo = cfg["bomega"]
    ix = cfg["index"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NotNearCritical)
        b = b_omega_index(fun, u, area_tol=float(bo["area_tol"]))
        m = morse_index(fun, u, tol_eig=ix["tol_eig"], n_eig=int(ix["n_eig"]), crit_tol=float(ix["crit_tol"]),
                        gauge=ix["gauge"])
    res = {
        "b_omega": b.to_dict(),
        "spectrum": m.to_dict(),
        "comparison_holds": bool(b.index <= m.morse_index),
        "warnings": [str(w.message) for w in caught],
    }
    if bo["C0"] is not None:
        res["energy_bound"] = energy_bound_check(fun, u, float(bo["C0"]))
    arts = {
        "bomega_csv": hio.write_csv(out / "bomega_eigenvalues.csv", [
            {"k": k, "eigenvalue": w} for k, w in enumerate(b.eigenvalues)]),
        "spectrum_png": plotting.plot_spectrum(out / "bomega_spectrum.png", b.eigenvalues, b.tol_eig,
                                               title="comparison form"),
    }
    return res, arts


def cmd_diagnose(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    u = _state_input(cfg, fun)
    dg = cfg["diagnose"]
    rep = diagnose(fun, u, center_vertex=dg["center_vertex"], radii=dg["radii"])
    res = {"diagnostics": rep.to_dict()}
    arts = {
        "pohozaev_csv": hio.write_csv(out / "pohozaev.csv", [
            {"radius": r, "boundary_residual": a, "weighted_residual": b}
            for r, a, b in zip(rep.pohozaev_radii, rep.pohozaev_boundary, rep.pohozaev_weighted)]),
        "pohozaev_png": plotting.plot_pohozaev(out / "pohozaev.png", rep.pohozaev_radii, rep.pohozaev_boundary,
                                               rep.pohozaev_weighted),
    }
    return res, arts


def cmd_scan(cfg, out: Path):
    fun = cfgmod.build_functional(cfg)
    sc = cfg["scan"]
    if sc["family"] == "single":
        family = [cfgmod.build_initial_state(cfg, fun)]
    else:
        mm = cfg["minmax"]
        family = latitude_sweepout(fun.mesh, fun.target, m=int(mm["samples"]), radius=mm["radius"],
                                   zoom=float(mm["zoom"]))
    rows = lambda_scan(fun, family, sc["alphas"], sc["lambdas"])
    res = {"rows": rows}
    if sc["family"] == "single":
        # frozen single map: consecutive ratio differences equal (l2 - l1)/(l1 l2) E_alpha
        u = family[0]
        checks = []
        for a in sc["alphas"]:
            e = alpha_energy(fun.mesh, u, fun.params.replace(alpha=float(a)))
            sub = [r for r in rows if r["alpha"] == float(a)]
            for r1, r2 in zip(sub, sub[1:]):
                l1, l2 = r1["lambda"], r2["lambda"]
                exact = (l2 - l1) / (l1 * l2) * e
                checks.append({"alpha": float(a), "lambda1": l1, "lambda2": l2,
                               "difference": r1["ratio"] - r2["ratio"], "identity": exact})
        res["identity_checks"] = checks
        res["omega"] = omega_term(fun.mesh, u, fun.form)
    arts = {
        "scan_csv": hio.write_csv(out / "scan.csv", rows),
        "scan_png": plotting.plot_scan(out / "scan.png", rows),
    }
    return res, arts


def cmd_mesh_export(cfg, out: Path):
    mesh = cfgmod.build_mesh(cfg)
    p = out / "mesh.obj"
    p.write_text(mesh.to_obj())
    res = {"vertices": mesh.n_vertices, "triangles": mesh.n_triangles, "area": mesh.area,
           "mean_edge_length": mesh.mean_edge_length}
    return res, {"mesh_obj": p}


HANDLERS = {
    "solve": cmd_solve,
    "minmax": cmd_minmax,
    "continue": cmd_continue,
    "index": cmd_index,
    "bomega": cmd_bomega,
    "diagnose": cmd_diagnose,
    "scan-lambda": cmd_scan,
    "mesh-export": cmd_mesh_export,
}


def run(command: str, config_path, out_dir, seed: int | None = None, threads: int | None = None) -> int:
    """Execute one command; always writes report.json when the output directory is usable."""
    out = Path(out_dir)
    t0 = time.perf_counter()
    meta = {
        "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": threads,
    }
    report = {"command": command, "status": "ok", "error": None, "config": None, "result": None,
              "artifacts": {}}
    code = EXIT_OK
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"hsphere: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if command not in HANDLERS:
            raise ValidationFailed(f"unknown command {command!r}; expected one of {COMMANDS}")
        cfg = cfgmod.load_config(config_path) if config_path else cfgmod.validate(cfgmod._merge(cfgmod.DEFAULTS, {}))
        if seed is not None:
            cfg["seed"] = int(seed)
            cfgmod.validate(cfg)
        report["config"] = cfg
        with _thread_limit(threads):
            res, arts = HANDLERS[command](cfg, out)
        report["result"] = res
        report["artifacts"] = {k: Path(v).name for k, v in arts.items()}
    except Exception as exc:  # noqa: BLE001 - every failure becomes a report entry and an exit code
        code = exit_status(exc)
        report["status"] = "error"
        report["error"] = {"code": _error_code(exc), "type": type(exc).__name__, "message": str(exc)}
        log.error("%s failed: %s", command, exc)
        if not isinstance(exc, (HSphereError, OSError)):
            log.debug("traceback", exc_info=True)
    meta["runtime_s"] = time.perf_counter() - t0
    report["metadata"] = meta
    try:
        hio.write_json(out / "report.json", report)
    except OSError as exc:
        print(f"hsphere: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


class _thread_limit:
    def __init__(self, n):
        self.n = n
        self.ctx = None

    def __enter__(self):
        if self.n:
            from threadpoolctl import threadpool_limits

            self.ctx = threadpool_limits(limits=int(self.n))
        return self

    def __exit__(self, *exc):
        if self.ctx is not None:
            self.ctx.unregister()
        return False


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hsphere", description="Critical points of alpha-energies of maps "
                                 "from the 2-sphere twisted by a 2-form.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML run configuration (defaults used when omitted)")
    ap.add_argument("--out", default="hsphere-out", help="output directory (default: hsphere-out)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=None, help="limit BLAS/OpenMP threads")
    ap.add_argument("--quiet", action="store_true", help="only log errors")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("hsphere: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    code = run(args.command, args.config, args.out, seed=args.seed, threads=args.threads)
    if not args.quiet:
        print(f"{args.command}: {'ok' if code == 0 else 'failed'} -> {Path(args.out) / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
