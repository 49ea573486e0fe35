from routing.controller import RoutingController, routing_loop
from routing.guidance import (
    EMPTY_GUIDANCE,
    GuidanceTable,
    Hop,
    assert_loop_free,
    follow,
    guidance_flips,
    guidance_rows,
    next_link,
    rebuild_guidance,
    shortest_path_tree,
)
from routing.intersections import I2INetwork, IntersectionAgent
from routing.objectives import (
    LinkEstimate,
    Objective,
    ObjectiveConfig,
    ObjectiveConfigError,
    References,
    Strategy,
    free_flow_estimates,
    link_weight,
    link_weights,
    objective_references,
)
