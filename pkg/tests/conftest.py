from hypothesis import settings

# compiled kernels make the first call slow; fixed example order keeps runs repeatable
settings.register_profile("repo", deadline=None, derandomize=True)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
