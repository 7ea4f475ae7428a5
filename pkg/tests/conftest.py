import numpy as np
import pytest

from predcal import datasets


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    datasets.write_fixtures(d)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, secs, text in sorted(ACCEPTANCE, key=lambda r: int(r[0][1:].split()[0])):
        terminalreporter.write_line(f"[{label}] {status} ({secs:.1f}s) {text}".rstrip())
