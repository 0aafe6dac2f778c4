import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run.

    Output capture eats writes made while a passing test runs, so the
    acceptance module stashes its verdict lines and this hook replays
    them where nothing intercepts the terminal.
    """
    for name in ("test_acceptance", "tests.test_acceptance"):
        module = sys.modules.get(name)
        if module is not None and getattr(module, "VERDICTS", None):
            terminalreporter.section("acceptance criteria")
            for line in module.VERDICTS:
                terminalreporter.write_line(line)
            break
