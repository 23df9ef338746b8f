import numpy as np
import pytest

from hsphere.errors import FormatError, MeshMismatch
from hsphere.io import load_state, read_csv, read_state, save_state, write_csv, write_json
from hsphere.mesh import icosphere, jittered_icosphere


def test_state_round_trip_is_bit_exact(tmp_path, rng):
    m = icosphere(2)
    u = rng.standard_normal((m.n_vertices, 4)) * 1e3 + 1e-300
    p = save_state(tmp_path / "s.txt", m, u)
    assert np.array_equal(load_state(p, m), u)
    sf = read_state(p)
    assert sf.subdivisions == 2 and sf.ambient_dim == 4


def test_state_for_other_mesh_rejected(tmp_path):
    m = icosphere(2)
    p = save_state(tmp_path / "s.txt", m, m.vertices)
    with pytest.raises(MeshMismatch):
        load_state(p, icosphere(3))
    with pytest.raises(MeshMismatch):
        load_state(p, icosphere(2, rotation=4))
    j = jittered_icosphere(2, 0.1, seed=0)
    with pytest.raises(MeshMismatch):
        load_state(save_state(tmp_path / "j.txt", j, j.vertices), icosphere(2))
    with pytest.raises(MeshMismatch):
        save_state(tmp_path / "bad.txt", m, m.vertices[:-1])


@pytest.mark.parametrize("mutate", [
    lambda lines: ["# something else"] + lines[1:],
    lambda lines: [ln for ln in lines if not ln.startswith("# vertices")],
    lambda lines: lines[:-1],
    lambda lines: lines[:-1] + [lines[-1] + " 1.0"],
    lambda lines: lines[:-1] + ["1 2 x 4 5 6"],
    lambda lines: lines[:2] + ["# vertices"] + lines[3:],
])
def test_malformed_state_files(tmp_path, mutate):
    m = icosphere(1)
    p = save_state(tmp_path / "s.txt", m, m.vertices)
    p.write_text("\n".join(mutate(p.read_text().splitlines())) + "\n")
    with pytest.raises(FormatError):
        read_state(p)


def test_json_handles_numpy_and_nonfinite(tmp_path):
    import json

    p = write_json(tmp_path / "r.json", {"a": np.float64(1.5), "b": np.arange(3), "c": np.inf,
                                         "d": np.bool_(True), "e": (np.int64(4),)})
    assert json.loads(p.read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "d": True, "e": [4]}


def test_csv_round_trip_keeps_full_precision(tmp_path):
    x = 0.1 + 0.2
    p = write_csv(tmp_path / "t.csv", [{"k": np.int64(1), "v": x}, {"k": 2, "v": np.float64(1 / 3)}])
    rows = read_csv(p)
    assert float(rows[0]["v"]) == x and float(rows[1]["v"]) == 1 / 3
    p2 = write_csv(tmp_path / "u.csv", [(1, 2.5)], columns=["a", "b"])
    assert read_csv(p2) == [{"a": "1", "b": "2.5"}]
