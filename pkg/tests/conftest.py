import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # replay the acceptance verdict lines outside capture so they show up
    # in plain `pytest -v` logs
    for name in ("test_acceptance", "tests.test_acceptance"):
        module = sys.modules.get(name)
        if module is not None and getattr(module, "VERDICTS", None):
            terminalreporter.section("acceptance gate")
            for line in module.VERDICTS:
                terminalreporter.write_line(line)
            break
