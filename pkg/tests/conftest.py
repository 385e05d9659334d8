"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS: dict[int, str] = {}


def record(number: int, ok: bool | None, detail: str) -> None:
    status = "SKIPPED" if ok is None else ("PASS" if ok else "FAIL")
    VERDICTS[number] = f"criterion {number}: {status}  {detail}"
    print(VERDICTS[number])


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
