import numpy as np
import pytest

from movcond.mesh import Discretization, SlabGeometry, build_slab_mesh


@pytest.fixture(scope="session")
def bench_mesh():
    return build_slab_mesh(SlabGeometry(), Discretization())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(key: str, title: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[key] = f"{'PASS' if ok else 'FAIL'}  [{key}] {title}: {detail}"
        print(ACCEPTANCE_LINES[key])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
