import json
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def rng_vectors():
    return json.loads((DATA / "rng_vectors.json").read_text())

_VERDICTS = []


@pytest.fixture
def criterion(capsys):
    """``report(number, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _VERDICTS.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS, key=lambda v: str(v[0])):
            terminalreporter.write_line(line)
