import sys

import pytest

from relayshare.channel import ChannelGains


@pytest.fixture
def gains_a():
    return ChannelGains(h_sr=0.3, h_sd=0.25, h_rd=0.4)


@pytest.fixture
def gains_b():
    return ChannelGains(h_sr=0.25, h_sd=0.21, h_rd=0.35)


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion that ran in this session."""
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(mod.format_line(number, passed, detail))
