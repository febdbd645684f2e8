from __future__ import annotations

import pytest

from mechinfo.constants import HILL48_THETA1, HILL48_TRUTH, ORTHO_TRUTH
from mechinfo.constitutive import Hill48Swift, IsoElastic, OrthoElastic
from mechinfo.fem import Protocol, SpecimenGeometry, generate_mesh, solve


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run long acceptance reproductions")


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: long-running acceptance reproduction (needs --runslow)")


def pytest_collection_modifyitems(config: pytest.Config, items: list) -> None:
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# ---- Materials ----
@pytest.fixture
def hill48_truth() -> Hill48Swift:
    return Hill48Swift(**HILL48_TRUTH)


@pytest.fixture
def hill48_theta1() -> Hill48Swift:
    return Hill48Swift(**HILL48_THETA1)


@pytest.fixture
def iso_elastic() -> IsoElastic:
    return IsoElastic(70_000.0, 0.33)


@pytest.fixture
def ortho_truth() -> OrthoElastic:
    return OrthoElastic(**ORTHO_TRUTH)


# ---- Specimens ----
@pytest.fixture
def rectangle() -> SpecimenGeometry:
    return SpecimenGeometry("RectangleROI", {"width": 4.0, "height": 2.0})


@pytest.fixture
def small_mesh(rectangle):
    return generate_mesh(rectangle, 0.5)


@pytest.fixture
def elastic_history(small_mesh, iso_elastic):
    """Elastic rectangle pulled 0.004 mm in 2 steps."""
    return solve(small_mesh, iso_elastic, Protocol.uniaxial(0.004, 2, 0.5))
