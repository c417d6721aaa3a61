import numpy as np
import pytest

from tresnet.data import Deployment, VmSeries


def make_deployment(values_by_vm, deployment_id="dep", interval=300, start=0):
    """Deployment from a list of (T, 3) arrays or 1-D max series."""
    vms = []
    for i, v in enumerate(values_by_vm):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            v = np.column_stack([v * 0.5, v * 0.75, v])
        vms.append(VmSeries(f"vm{i}", interval, start, v))
    return Deployment(deployment_id, vms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_deployment(rng):
    def build(n_vms=4, length=200):
        base = rng.uniform(0.2, 0.8, size=(n_vms, length))
        return make_deployment(list(base))
    return build


ACCEPTANCE = []  # (criterion, passed, detail), filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
