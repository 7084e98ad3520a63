import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sfq.catalog import builtin_catalog  # noqa: E402
from sfq.simulate import mean_components, run_monte_carlo  # noqa: E402


@pytest.fixture(scope="session")
def catalog():
    return builtin_catalog()


@pytest.fixture(scope="session")
def builtin_runs(catalog):
    return run_monte_carlo(catalog)


@pytest.fixture(scope="session")
def builtin_means(builtin_runs):
    return mean_components(builtin_runs)


_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion label")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = dict(report.user_properties).get("criterion")
    if label is None:
        return
    detail = dict(report.user_properties).get("detail", "")
    _CRITERIA.append(("PASS" if report.outcome == "passed" else "FAIL", label, detail))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, detail in _CRITERIA:
        terminalreporter.write_line(f"[{status}] {label}" + (f"  ({detail})" if detail else ""))
