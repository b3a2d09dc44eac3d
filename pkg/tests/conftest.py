import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import certlog  # noqa: E402
from msot import lp_core  # noqa: E402

FEAS_TOL = 1e-8
CS_TOL = 1e-6


def pytest_collection_modifyitems(config, items):
    # acceptance last, so its certificate summary covers the whole session
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)


@pytest.fixture(autouse=True)
def certify_every_solve(request):
    bad = []

    def listener(plan, a, b, rows, cols, costs):
        cert = lp_core.certify(plan, a, b, rows, cols, costs)
        rec = {"test": request.node.nodeid, "feasibility": cert.feasibility,
               "complementary_slackness": cert.complementary_slackness,
               "dual_infeasibility": cert.dual_infeasibility, "ok": cert.ok}
        certlog.RECORDS.append(rec)
        if not (cert.feasibility <= FEAS_TOL and cert.complementary_slackness <= CS_TOL
                and cert.ok):
            bad.append(rec)

    lp_core.add_solve_listener(listener)
    yield
    lp_core.remove_solve_listener(listener)
    assert not bad, f"solve failed its optimality certificate: {bad[0]}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
