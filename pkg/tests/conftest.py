import pytest

from taylorshift.construct import ZSpec, build_domain

ACCEPTANCE_Z = ZSpec.dyadic(8)
ACCEPTANCE_R = (0.49, 0.47, 0.45)


@pytest.fixture(scope="session")
def built():
    """The three-stage acceptance build, shared by all tests that need it."""
    return build_domain(ACCEPTANCE_Z, 3, ACCEPTANCE_R)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
