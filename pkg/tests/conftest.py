import os
import sys
from pathlib import Path

import hypothesis
import pytest

sys.path.insert(0, str(Path(__file__).parent))

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=2000, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).parent / "data"


def load_corpus() -> list[str]:
    return [ln.strip() for ln in (DATA / "corpus.smi").read_text().splitlines() if ln.strip()]


@pytest.fixture(scope="session")
def corpus() -> list[str]:
    return load_corpus()


@pytest.fixture
def stub_server():
    """Factory for started stub servers; all are stopped at teardown."""
    from chemeval.stub import StubServer

    servers = []

    def start(responder=None, delay=0.0):
        server = StubServer(responder, delay) if responder else StubServer(delay=delay)
        servers.append(server.start())
        return server

    yield start
    for s in servers:
        s.stop()


# one PASS/FAIL line per acceptance criterion in the terminal summary
_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = "PASS" if report.outcome == "passed" else report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        terminalreporter.write_line(f"{_acceptance[name]:<6} {name}")
