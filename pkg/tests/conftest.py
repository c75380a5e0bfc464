import hypothesis

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=50)
hypothesis.settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line acceptance verdicts after the test summary."""
    import sys

    lines = []
    for name, mod in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(mod, "VERDICT_LINES", [])
            break
    if lines:
        terminalreporter.section("acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)
