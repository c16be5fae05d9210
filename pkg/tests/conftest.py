import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: dict[str, tuple[bool, str]] = {}


class Verdicts:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, key: str, ok: bool, detail: str) -> None:
        prev = _VERDICTS.get(key)
        if prev is not None:
            ok, detail = prev[0] and ok, f"{prev[1]}; {detail}"
        _VERDICTS[key] = (ok, detail)


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=lambda s: int(s.split()[0])):
        ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
