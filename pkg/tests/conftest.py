import pytest
from hypothesis import HealthCheck, settings

from surfsim.circuit import build_parallel_circuit, build_serialized_circuit
from surfsim.layout import build_layout

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def layout3():
    return build_layout(3)


@pytest.fixture(scope="session")
def layout5():
    return build_layout(5)


@pytest.fixture(scope="session")
def serial3(layout3):
    return build_serialized_circuit(layout3, 3)


@pytest.fixture(scope="session")
def parallel3(layout3):
    return build_parallel_circuit(layout3, 3)
