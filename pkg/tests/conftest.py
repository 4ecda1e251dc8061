"""Collects acceptance verdicts and prints one PASS/FAIL line per criterion."""

import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(name: str, ok: bool, detail: str = "") -> bool:
        prev = _VERDICTS.get(name)
        ok = bool(ok) and (prev is None or prev[0])
        detail = detail if prev is None else f"{prev[1]}; {detail}"
        _VERDICTS[name] = (ok, detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda s: (int(s.split()[0].rstrip("abc")), s)):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
