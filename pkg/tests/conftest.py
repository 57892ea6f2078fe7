import numpy as np
import pytest

from reclaimsim import trace as tr


def make_row(counts=None, key="f"):
    c = np.zeros(tr.MINUTES_PER_DAY, dtype=np.int64)
    if counts is not None:
        c[:len(counts)] = counts
    return tr.AzureTraceRow(key, c)


def events_at(spec):
    """``spec``: list of (t_ms, tenant, workload) -> sequenced events."""
    return tr.merge_streams([[tr.InvocationEvent(t, ten, wl, i)] for i, (t, ten, wl) in enumerate(spec)])


@pytest.fixture
def small_workloads():
    return (
        tr.Workload(0, "a", 1000, 100),
        tr.Workload(1, "b", 4000, 100),
        tr.Workload(2, "c", 1000, 100),
    )


@pytest.fixture(scope="session")
def synth_rows():
    return tr.synth_azure_rows(600, seed=3)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
