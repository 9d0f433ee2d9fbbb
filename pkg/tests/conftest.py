import pytest

# filled by test_acceptance.py; one line per criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    # the expensive acceptance sweeps run last so the unit suites report first
    items.sort(key=lambda it: it.get_closest_marker("acceptance") is not None)


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES
