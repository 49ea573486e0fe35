from microsim.idm import VEHICLE_LENGTH_M, IdmParams, ballistic_update, idm_acceleration
from microsim.runner import (
    NetworkMinute,
    SimulationLog,
    VehicleSummary,
    jitter_departures,
    network_series,
    run,
    series_frame,
    simulate_free,
    trajectory_frame,
    vehicles_frame,
)
from microsim.world import (
    InvariantViolation,
    SimClock,
    SimulationStalledError,
    StepResult,
    VehicleState,
    World,
    step,
)
