import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from uavsearch.scenario_io import bundled_scenario_path, load_scenario  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tutorial():
    return load_scenario(bundled_scenario_path())


@pytest.fixture(scope="session")
def tutorial_path():
    return str(bundled_scenario_path())


# -- acceptance criteria summary -------------------------------------------------

_criteria: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def detail(request):
    """Attach a short measurement string to the criterion line of this test."""
    def add(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = marker.args
    text = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    prev = _criteria.get(n)
    if prev is None or prev[0] == "PASS":
        _criteria[n] = (status, title, text)
    line = f"criterion {n:>2} {status}: {title}" + (f" [{text}]" if text else "")
    tr = item.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        tr.write_line(line)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}: {title}" + (f" [{text}]" if text else ""))
