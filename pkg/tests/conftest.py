import contextlib

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    """Record one acceptance criterion's verdict, printed again in the terminal summary."""

    @contextlib.contextmanager
    def record(name: str, detail: str = ""):
        note = {"detail": detail}
        try:
            yield note
        except BaseException:
            _CRITERIA[name] = (False, note["detail"])
            with capsys.disabled():
                print(f"\n{name} FAIL {note['detail']}")
            raise
        _CRITERIA[name] = (True, note["detail"])
        with capsys.disabled():
            print(f"\n{name} PASS {note['detail']}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
