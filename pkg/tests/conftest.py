import pytest

from floodtrace import runner
from helpers import ACCEPTANCE_LINES, CONSERVATION


def check_conservation(network) -> dict:
    c = network.conservation()
    assert c["injected"] == c["delivered"] + c["dropped"] + c["in_flight"], c
    open_entries = sum(1 for _, e in network.validation_ledger().items() if e.outcome == "in_flight")
    assert open_entries == c["in_flight"], (open_entries, c)
    return c


@pytest.fixture(autouse=True)
def _conservation_guard(monkeypatch):
    """Every scenario run anywhere in the suite must conserve packets."""
    original = runner.Simulation.run

    def run(self):
        summary = original(self)
        check_conservation(self.network)
        CONSERVATION["runs"] += 1
        return summary

    monkeypatch.setattr(runner.Simulation, "run", run)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if CONSERVATION["runs"]:
        terminalreporter.write_line(f"conservation checked on {CONSERVATION['runs']} scenario runs")
