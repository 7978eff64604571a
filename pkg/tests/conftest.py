import pytest

from rmabsched.chain import ChainC1

# outcome lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def ref_chain():
    # satisfies p11_active <= p01_active <= p01_passive <= p11_passive
    return ChainC1(p01_passive=0.2, p11_passive=0.8, p01_active=0.1, p11_active=0.05)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
