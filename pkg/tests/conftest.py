import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=5, deadline=None)
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile("default")

np.seterr(over="raise", invalid="raise")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "frozen.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; they are echoed again in the terminal summary."""

    def record(n: int, passed: bool, detail: str) -> bool:
        line = f"AC{n}: {'PASS' if passed else 'FAIL'} {detail}"
        _VERDICTS.append(line)
        print(line, flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s[2 : s.index(":")])):
            terminalreporter.write_line(line)
