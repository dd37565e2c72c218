import pytest

from vecsched.domain import HARDWARE, SecurityVector, Task, VNode, Workflow, default_paper_catalog


@pytest.fixture
def catalog():
    return default_paper_catalog(seed=0)


def make_workflow(sspecs="HHHLL", qspecs=100.0, base=100.0, wid="W"):
    return Workflow(wid, SecurityVector.from_string(sspecs), qspecs, base)


def make_vnode(rspecs="HHHLL", hw="config1", preference=(), trust=1.0, capacity=5, device_id=1):
    return VNode(device_id, SecurityVector.from_string(rspecs), HARDWARE[hw], preference, trust, capacity)


def make_task(workflow=None, data=1.0, user=0, task_id=0, t=0.0):
    return Task.of(task_id, workflow or make_workflow(), data, t, user)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
