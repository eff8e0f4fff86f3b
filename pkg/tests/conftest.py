"""Shared fixtures for the nmpzero test suite."""

from typing import Callable, Tuple

import numpy as np
import pytest

from core.netjac import build_jacobian
from core.network import build_operating_matrices, build_reduced
from core.types import Fixture, NetworkJacobian, OperatingMatrices, ReducedNetwork
from fixtures import load_fixture, random_fixture

RandomCase = Tuple[ReducedNetwork, OperatingMatrices, NetworkJacobian]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240617)


def _case(fixture: Fixture) -> RandomCase:
    assert fixture.network is not None and fixture.op is not None
    net = build_reduced(fixture.network)
    return net, build_operating_matrices(net, fixture.op), build_jacobian(net, fixture.op)


@pytest.fixture
def random_network() -> Callable[..., RandomCase]:
    """Seeded passive instance with well-separated singular-value branches."""

    def make(seed: int, n: int = 0) -> RandomCase:
        return _case(random_fixture(seed, n or None))

    return make


@pytest.fixture(scope="session")
def case1() -> Fixture:
    return load_fixture("case1")


@pytest.fixture(scope="session")
def case3() -> Fixture:
    return load_fixture("case3")


@pytest.fixture(scope="session")
def case3_jacobian(case3: Fixture) -> NetworkJacobian:
    return _case(case3)[2]
