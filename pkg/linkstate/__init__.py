from linkstate.costing import (
    CostingApproach,
    SPEED_EPSILON_KMH,
    ghg_cost,
    ghg_cost_marginal,
    ghg_cost_sum,
    ghg_cost_sum_per_lane,
    ghg_cost_weighted,
    ghg_cost_weighted_per_lane,
    travel_time_cost,
)
from linkstate.records import (
    EMPTY_SECOND,
    INTERVAL_S,
    IntervalRecordError,
    LINK_RECORD_COLUMNS,
    LinkIntervalRecord,
    LinkSecond,
    aggregate,
    attach_inlink_speeds,
    read_link_records,
    record_from_series,
    records_to_frame,
    write_link_records,
)
