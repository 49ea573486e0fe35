from netcore.network import (
    DemandTable,
    Link,
    Network,
    ScenarioParseError,
    ScenarioValidationError,
    Trip,
    validate_demand,
)
from netcore.generator import generate_demand, generate_grid_network, generate_scenario
from netcore.scenario_io import (
    load_demand,
    load_network,
    load_scenario,
    save_demand,
    save_network,
)
