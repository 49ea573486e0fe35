import pytest

from emissions.opmode import default_opmode_table
from netcore.generator import generate_scenario
from netcore.network import DemandTable, Link, Network, Trip


@pytest.fixture(scope="session")
def table():
    return default_opmode_table()


@pytest.fixture
def single_link():
    """Two nodes, one 400 m single-lane link at 40 km/h."""
    return Network.from_links([Link(0, 0, 1, 400.0, 1, 40.0)])


@pytest.fixture
def fork_network():
    """An approach link 0→1 followed by two parallel links 1→2."""
    return Network.from_links([
        Link(0, 0, 1, 300.0, 1, 40.0),
        Link(1, 1, 2, 100.0, 1, 40.0),
        Link(2, 1, 2, 100.0, 1, 40.0),
    ])


@pytest.fixture
def chain_network():
    """0→1→2, both links 200 m, one lane."""
    return Network.from_links([
        Link(0, 0, 1, 200.0, 1, 40.0),
        Link(1, 1, 2, 200.0, 1, 40.0),
    ])


@pytest.fixture(scope="session")
def small_scenario():
    """3×3 grid with enough demand to queue at a few nodes."""
    return generate_scenario(3, 3, 80, "uniform", 180.0, seed=3)


@pytest.fixture
def one_trip():
    def make(origin: int, destination: int, departure_s: float = 0.0, vehicle_id: int = 0) -> DemandTable:
        return DemandTable(trips=(Trip(vehicle_id, origin, destination, departure_s),))
    return make
