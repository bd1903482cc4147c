"""Shared fixtures and the per-criterion summary of the acceptance suite."""
from __future__ import annotations

import pytest

_CRITERIA: list = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    status = "PASS" if report.outcome == "passed" else "FAIL"
    _CRITERIA.append((props["criterion"], status, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, status, detail in _CRITERIA:
        tr.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
    n_pass = sum(s == "PASS" for _, s, _ in _CRITERIA)
    tr.write_line(f"{n_pass}/{len(_CRITERIA)} criteria pass")


@pytest.fixture
def criterion(request, record_property):
    """Tag the running test with an acceptance criterion; returns a detail recorder."""
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", marker.args[0] if marker else request.node.name)

    def detail(text: str):
        record_property("detail", text)
    return detail


@pytest.fixture(scope="session")
def geometry():
    from tflnpair.waveguide import WaveguideGeometry
    return WaveguideGeometry()


@pytest.fixture(scope="session")
def disp534(geometry):
    """Nominal waveguide at 25 C, the dispersion used for the measured-spectrum workflow."""
    from tflnpair.qpm.dispersion import ModalDispersion
    return ModalDispersion(geometry, 25.0)


@pytest.fixture(scope="session")
def period534(disp534):
    from tflnpair.qpm.process import poling_period
    return poling_period(disp534, 534.0, 815.0)
