import pytest

from cmsrepp.model_zoo import build_srw_extension


@pytest.fixture(scope="session")
def srw():
    """One SRW model per session: its Fourier tables take tens of seconds to build."""
    return build_srw_extension()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
