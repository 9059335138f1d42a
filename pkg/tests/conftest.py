"""Shared pytest wiring: the acceptance suite registers one verdict per
criterion here, and the terminal summary prints them uncaptured."""

CRITERION_RESULTS: list[tuple[int, str, str]] = []


def record_criterion(number: int, title: str, verdict: str) -> None:
    CRITERION_RESULTS.append((number, title, verdict))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict in sorted(CRITERION_RESULTS):
        terminalreporter.write_line(f"criterion {number} ({title}): {verdict}")
