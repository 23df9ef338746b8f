import json
import subprocess
import sys

import pytest

from hsphere import cli


def run(tmp_path, command, text=None, *extra, name="out"):
    args = [command, "--out", str(tmp_path / name), "--quiet"]
    if text is not None:
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(text)
        args += ["--config", str(cfg)]
    code = cli.main(args + list(extra))
    rep = json.loads((tmp_path / name / "report.json").read_text())
    return code, rep


S2 = "mesh: {subdivisions: 2}\ntarget: {kind: round_sphere, n: 2}\n"
S3 = "mesh: {subdivisions: 2}\ntarget: {kind: round_sphere, n: 3}\n"


def test_solve_from_constant_map_converges(tmp_path):
    code, rep = run(tmp_path, "solve", S2 + "init: {kind: constant}")
    assert code == 0 and rep["status"] == "ok"
    assert rep["result"]["solve"]["converged"]
    assert rep["result"]["energy_parts"]["dirichlet"] < 1e-20
    out = tmp_path / "out"
    for f in ("state.txt", "trace.csv", "trace.png", "state.png"):
        assert (out / f).stat().st_size > 0
    assert set(rep["metadata"]) >= {"started", "version", "runtime_s"}
    assert rep["config"]["mesh"]["subdivisions"] == 2


def test_minmax_reports_width_above_area_floor(tmp_path):
    code, rep = run(tmp_path, "minmax", S3 + "minmax: {samples: 8, budget: 100}\nsolver: {tol_grad: 1.0e-5}")
    assert code == 0
    assert rep["result"]["width_above_floor"] > 10.0
    assert (tmp_path / "out" / "sweepout.png").exists()


def test_continue_from_identity(tmp_path):
    code, rep = run(tmp_path, "continue", S2 + "functional: {schedule: [1.1, 1.05]}\n"
                    "continuation: {minmax_start: false}\nsolver: {method: auto}")
    assert code == 0
    stages = rep["result"]["continuation"]["stages"]
    assert [s["alpha"] for s in stages] == [1.1, 1.05]
    assert (tmp_path / "out" / "continuation.png").exists()


def test_index_and_bomega_on_equator(tmp_path):
    text = S3 + "init: {kind: equator}\nsolver: {method: newton}"
    code, rep = run(tmp_path, "index", text, name="idx")
    assert code == 0
    sp = rep["result"]["spectrum"]
    assert sp["morse_index"] == 1 and sp["gauge"] == "conformal"
    code, rep = run(tmp_path, "bomega", text + "\nbomega: {C0: 0.5}", name="bo")
    assert code == 0
    assert rep["result"]["comparison_holds"]
    assert rep["result"]["energy_bound"]["passes"]


def test_diagnose_reads_a_solved_state(tmp_path):
    code, _ = run(tmp_path, "solve", S2 + "functional: {alpha: 1.1}\nsolver: {method: newton}", name="s")
    assert code == 0
    state = tmp_path / "s" / "state.txt"
    code, rep = run(tmp_path, "diagnose", S2 + f"functional: {{alpha: 1.1}}\ndiagnose: {{state: '{state}'}}",
                    name="d")
    assert code == 0
    d = rep["result"]["diagnostics"]
    for block in ("conformality", "pohozaev", "balancing", "el_residual"):
        assert block in d
    assert d["el_residual"] < 1e-5
    assert (tmp_path / "d" / "pohozaev.csv").exists()


def test_scan_single_reports_identity(tmp_path):
    code, rep = run(tmp_path, "scan-lambda", open("configs/scan_single.yaml").read())
    assert code == 0
    for c in rep["result"]["identity_checks"]:
        assert abs(c["difference"] - c["identity"]) <= 1e-12 * abs(c["identity"])


def test_mesh_export(tmp_path):
    code, rep = run(tmp_path, "mesh-export", "mesh: {subdivisions: 1}")
    assert code == 0 and rep["result"]["vertices"] == 42
    lines = (tmp_path / "out" / "mesh.obj").read_text().splitlines()
    assert sum(ln.startswith("f ") for ln in lines) == 80


@pytest.mark.parametrize("command,text,code,err", [
    ("solve", "mesh: [1,", 2, "ConfigParse"),
    ("solve", "mesh: {subdivisions: 9}", 2, "ValidationFailed"),
    ("solve", "unknown: 1", 2, "ValidationFailed"),
    ("diagnose", "diagnose: {state: missing.txt}", 4, "FileNotFoundError"),
    ("bomega", S2, 3, "TargetNotThreeDimensional"),
])
def test_exit_codes(tmp_path, command, text, code, err):
    got, rep = run(tmp_path, command, text)
    assert got == code
    assert rep["status"] == "error" and rep["error"]["type"] == err


def test_state_from_other_mesh_is_io_error(tmp_path):
    run(tmp_path, "solve", "mesh: {subdivisions: 1}\ninit: {kind: constant}", name="s")
    got, rep = run(tmp_path, "diagnose", S2 + f"diagnose: {{state: '{tmp_path / 's' / 'state.txt'}'}}", name="d")
    assert got == 4 and rep["error"]["type"] == "MeshMismatch"


def test_console_script_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "hsphere.cli", "mesh-export", "--out", str(tmp_path), "--quiet"],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert json.loads((tmp_path / "report.json").read_text())["status"] == "ok"


def test_negative_seed_rejected(tmp_path):
    assert cli.main(["solve", "--out", str(tmp_path), "--seed", "-3", "--quiet"]) == 2
