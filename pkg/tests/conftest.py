"""Shared pytest plumbing.

Collects the one-line verdicts emitted by the acceptance tests and
prints them as a summary section, because the default fd-level capture
would otherwise swallow lines from passing tests.
"""

_verdicts: list[str] = []


def record_verdict(line: str) -> None:
    _verdicts.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.section("acceptance")
    for line in sorted(_verdicts):
        terminalreporter.write_line(line)
