import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hsphere.target import make_target  # noqa: E402

TARGET_SPECS = {
    "S2": ("round_sphere", {"n": 2}),
    "S3": ("round_sphere", {"n": 3}),
    "S4": ("round_sphere", {"n": 4}),
    "ellipsoid": ("ellipsoid", {"semiaxes": [1.3, 1.0, 0.8]}),
    "R3": ("flat_euclidean", {"K": 3}),
    "T3": ("flat_torus", {"n": 3}),
}


def build_target(name):
    kind, kw = TARGET_SPECS[name]
    return make_target(kind, **kw)


def random_state(mesh, target, rng):
    """Smooth random map plus small vertex noise, on the target."""
    x = mesh.vertices
    if target.kind == "flat_torus":
        th = x @ rng.standard_normal((3, target.dim)) + 0.1 * rng.standard_normal((len(x), target.dim))
        return (np.stack([np.cos(th), np.sin(th)], 2) * target.radii[None, :, None]).reshape(len(x), -1)
    K = target.ambient_dim
    y = 0.5 * x @ rng.standard_normal((3, K)) + 0.3 * rng.standard_normal(K)
    y = y + 0.05 * rng.standard_normal((len(x), K))
    if target.kind == "flat_euclidean":
        return y
    if target.kind == "ellipsoid":
        a = target.semiaxes
        z = y * a
        return z / np.sqrt(((z / a) ** 2).sum(1, keepdims=True))
    return target.project_point(y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
