import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from torusendo import _backend, gallery as G

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def skew():
    return G.paper_example(0.1)


@pytest.fixture(scope="session")
def product():
    return G.product_example()


@pytest.fixture(scope="session")
def lin():
    return G.linear()


@pytest.fixture(scope="session")
def shear():
    return G.shear_example()


@pytest.fixture(params=_backend.available())
def backend(request):
    prev = _backend.use(request.param)
    yield request.param
    _backend.use(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------------ acceptance summary

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(number, ok, detail)`` prints a PASS/FAIL line and records it for the summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        log.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(log):
            terminalreporter.write_line(line)
