from pathlib import Path

import pytest

from dualnews.textprep import Vocab
from tests.helpers import FIXTURES


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def vocab200() -> Vocab:
    return Vocab.load(FIXTURES / "vocab200.txt")


# -- acceptance summary ---------------------------------------------------------

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        _acceptance[props["criterion"]] = (outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_acceptance, key=lambda k: int(k.split()[0])):
        outcome, detail = _acceptance[key]
        terminalreporter.write_line(f"[{outcome}] {key}" + (f": {detail}" if detail else ""))
