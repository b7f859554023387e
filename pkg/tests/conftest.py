import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def report(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion.

    ``checks`` is a list of ``(label, ok, detail)``; returns True when all pass.
    """

    def _report(number: int, name: str, checks) -> bool:
        ok = all(c[1] for c in checks)
        parts = "; ".join(f"{label} {detail} [{'ok' if good else 'FAIL'}]" for label, good, detail in checks)
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {parts}"
        _LINES[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
