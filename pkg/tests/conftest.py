import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anchorfit.body_model import build_rig18

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# outcomes of tests marked `trivial`, and acceptance lines, for the summary
_TRIVIAL = {}
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "trivial: one of the hand-checkable operation examples")


def pytest_collection_modifyitems(items):
    # the acceptance suite summarizes the unit tests, so it runs last
    items.sort(key=lambda item: "test_acceptance.py" in item.nodeid)


def pytest_runtest_logreport(report):
    if "trivial" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        prev = _TRIVIAL.get(report.nodeid, True)
        _TRIVIAL[report.nodeid] = prev and report.outcome == "passed"


def trivial_outcomes():
    return dict(_TRIVIAL)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def rig():
    return build_rig18()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
