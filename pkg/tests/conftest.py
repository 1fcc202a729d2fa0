from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from voicegrasp.hand import default_hand_config
from voicegrasp.scene import PointCloud
from voicegrasp.synth import sphere_cloud


@pytest.fixture(scope="session")
def hand():
    return default_hand_config()


@pytest.fixture(scope="session")
def sphere40(hand):
    """40 mm sphere centred on the pinch-axis midpoint; normals face outward
    here, which matches the camera-facing convention for a camera inside
    the hand frame's origin side."""
    pts, nrm = sphere_cloud(hand.pinch_midpoint, 0.04, 4000)
    return PointCloud(pts, nrm)


@pytest.fixture(scope="session")
def cylinder_config_path():
    return Path(str(resources.files("voicegrasp.data").joinpath("scenes/cylinder/plan.yaml")))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance report -------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """record(criterion, title, ok, detail): one entry per checked part of a criterion."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(criterion, title, ok, detail):
        store.setdefault(criterion, (title, []))[1].append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(store):
        title, parts = store[criterion]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {criterion} ({title}): {verdict} - {detail}")
