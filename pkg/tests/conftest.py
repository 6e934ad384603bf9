import pytest

from symek.spaces import ModelDescriptor


@pytest.fixture
def vec16():
    return ModelDescriptor.vector(16)


@pytest.fixture
def grid17():
    return ModelDescriptor.grid1d(17, 0.25)


@pytest.fixture(params=["vector", "grid"])
def model(request):
    if request.param == "vector":
        return ModelDescriptor.vector(8)
    return ModelDescriptor.grid1d(9, 0.5)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
