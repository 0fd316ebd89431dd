import time
from contextlib import contextmanager

import numpy as np
import pytest

from ctxfer._accel import HAVE_NUMBA, set_backend
from ctxfer.dataset import scan_dataset
from ctxfer.model import BackboneSpec, HeadSpec, build_classifier
from ctxfer.synthetic import make_texture_dataset

ACCEPTANCE = []


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not HAVE_NUMBA:
        pytest.skip("numba not installed")
    previous = set_backend(request.param)
    yield request.param
    set_backend(previous)


@pytest.fixture(scope="session")
def texture_root(tmp_path_factory):
    return make_texture_dataset(tmp_path_factory.mktemp("textures"), 200, 50, 32, seed=0)


@pytest.fixture(scope="session")
def texture_manifest(texture_root):
    return scan_dataset(texture_root, target_size=(32, 32))


@pytest.fixture
def tiny_model():
    """Tiny stand-in backbone at 12x12 with an 8-unit float64 head."""
    spec = BackboneSpec("tiny_inception", truncation_node="mixed0", input_size=(12, 12), seed=3)
    return build_classifier(spec, HeadSpec(dense_units=8, dtype="float64"), seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion():
    """Time a block, record PASS/FAIL, and enforce its runtime budget."""

    @contextmanager
    def run(label, budget_seconds):
        start = time.perf_counter()
        entry = {"label": label, "budget": budget_seconds, "ok": False, "elapsed": None}
        ACCEPTANCE.append(entry)
        yield
        entry["elapsed"] = time.perf_counter() - start
        assert entry["elapsed"] < budget_seconds, f"{label}: {entry['elapsed']:.2f}s over {budget_seconds}s"
        entry["ok"] = True

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for e in ACCEPTANCE:
        elapsed = "n/a" if e["elapsed"] is None else f"{e['elapsed']:.2f}s"
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{status}  {e['label']}  ({elapsed}, budget {e['budget']}s)")
