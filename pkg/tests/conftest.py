"""
Pytest configuration and fixtures.
"""

import sys
import os

import numpy as np
import pytest

# Add package to path
sys.path.append(os.getcwd())

from pvsa.models.network import FeederGraph, LineSegment, LoadSpec, PhaseImpedanceMatrix
from pvsa.models.phase import ALL_PHASES, Phase
from pvsa.services.feeder_service import FeederService
from pvsa.services.loadflow_service import LoadFlowService

TOY_V_BASE = 2400.0


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo and timing tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running check, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def line_impedance(scale: float = 1.0) -> PhaseImpedanceMatrix:
    """Symmetric three-phase impedance with mutual coupling, ohms."""
    z = np.array(
        [
            [0.30 + 0.60j, 0.10 + 0.25j, 0.09 + 0.20j],
            [0.10 + 0.25j, 0.31 + 0.58j, 0.10 + 0.25j],
            [0.09 + 0.20j, 0.10 + 0.25j, 0.30 + 0.60j],
        ]
    )
    return PhaseImpedanceMatrix(z * scale)


# --- toy feeders -------------------------------------------------------------


@pytest.fixture
def two_bus():
    """Source "s" feeding bus "1" over one coupled three-phase segment."""
    return FeederGraph(
        buses={"s": ALL_PHASES, "1": ALL_PHASES},
        segments=[LineSegment("s", "1", line_impedance())],
        source="s",
        v_base=TOY_V_BASE,
        name="two-bus",
    )


@pytest.fixture
def chain3():
    """s -> 1 -> 2."""
    return FeederGraph(
        buses={"s": ALL_PHASES, "1": ALL_PHASES, "2": ALL_PHASES},
        segments=[
            LineSegment("s", "1", line_impedance()),
            LineSegment("1", "2", line_impedance(2.0)),
        ],
        source="s",
        v_base=TOY_V_BASE,
        name="chain3",
    )


@pytest.fixture
def wye5():
    """
    Y-shaped feeder:

        s - 1 - 2 - 3
                \\
                 4 (phase a only)
    """
    single_a = np.zeros((3, 3), dtype=complex)
    single_a[0, 0] = 0.8 + 0.9j
    return FeederGraph(
        buses={
            "s": ALL_PHASES,
            "1": ALL_PHASES,
            "2": ALL_PHASES,
            "3": ALL_PHASES,
            "4": frozenset({Phase.A}),
        },
        segments=[
            LineSegment("s", "1", line_impedance()),
            LineSegment("1", "2", line_impedance(1.5)),
            LineSegment("2", "3", line_impedance(0.5)),
            LineSegment("2", "4", PhaseImpedanceMatrix.from_matrix(single_a)),
        ],
        source="s",
        v_base=TOY_V_BASE,
        name="wye5",
    )


@pytest.fixture
def wye5_loads():
    return LoadSpec(
        {
            "2": np.array([30e3 + 10e3j, 25e3 + 8e3j, 20e3 + 5e3j]),
            "3": np.array([40e3 + 15e3j, 40e3 + 15e3j, 40e3 + 15e3j]),
            "4": np.array([15e3 + 5e3j, 0, 0]),
        }
    )


# --- bundled datasets ----------------------------------------------------------


@pytest.fixture(scope="session")
def feeder_service():
    return FeederService()


@pytest.fixture(scope="session")
def loadflow():
    return LoadFlowService()


@pytest.fixture(scope="session")
def ieee37(feeder_service):
    """(graph, loads) of the bundled 37-node feeder."""
    return feeder_service.load_feeder("ieee37")


@pytest.fixture(scope="session")
def ieee37_base(ieee37, loadflow):
    graph, loads = ieee37
    return loadflow.solve(graph, loads)


@pytest.fixture(scope="session")
def ieee123(feeder_service):
    return feeder_service.load_feeder("ieee123")


@pytest.fixture(scope="session")
def ieee123_base(ieee123, loadflow):
    graph, loads = ieee123
    return loadflow.solve(graph, loads)


@pytest.fixture(scope="session")
def table1(feeder_service, ieee37):
    return feeder_service.load_scenario("table1", ieee37[0])


@pytest.fixture(scope="session")
def odd_nodes(feeder_service, ieee37):
    return feeder_service.load_scenario("odd-nodes", ieee37[0])
