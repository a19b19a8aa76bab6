use super::world::{ControlStatus, PenaltyEvent, PenaltyKind, WorldState, EGO_HALF_EXTENTS};
use crate::geometry::boxes_overlap;

/// Lateral distance from the route beyond which the ego has deviated (m).
pub const MAX_ROUTE_DEVIATION: f64 = 30.0;
/// Speed below which the ego counts as stopped at a stop sign (m/s).
pub const STOP_SPEED_THRESHOLD: f64 = 0.1;

/// Evaluates every penalty predicate on a world state. At most one event per kind,
/// reported in the order of [`PenaltyKind::ALL`].
///
/// Red-light and stop-sign predicates compare the current ego position against the
/// region-occupancy flags carried in the state from the previous sample.
pub fn detect_penalties(world: &WorldState) -> Vec<PenaltyEvent> {
    let mut kinds = Vec::new();
    let ego = &world.ego;

    if world
        .agents
        .iter()
        .any(|a| boxes_overlap(&ego.pose, EGO_HALF_EXTENTS, &a.pose, a.half_extents))
    {
        kinds.push(PenaltyKind::Collision);
    }

    let proj = world.ego_projection();
    let mut red_light = false;
    let mut stop_sign = false;
    for c in &world.controls {
        let inside = world.ego_in_region(c, &proj);
        match c.status {
            ControlStatus::RedLight if inside && !c.ego_inside => red_light = true,
            ControlStatus::StopSign if c.ego_inside && !inside => {
                let stopped = c
                    .min_speed_inside
                    .is_some_and(|v| v < STOP_SPEED_THRESHOLD);
                stop_sign |= !stopped;
            }
            _ => {}
        }
    }
    if red_light {
        kinds.push(PenaltyKind::RedLight);
    }

    let (lo, hi) = world.scenario.road_bounds();
    let off_road = proj.lateral < lo || proj.lateral > hi;
    if proj.distance > MAX_ROUTE_DEVIATION || off_road {
        kinds.push(PenaltyKind::RouteDeviation);
    }
    if stop_sign {
        kinds.push(PenaltyKind::StopSignViolation);
    }

    kinds
        .into_iter()
        .map(|kind| PenaltyEvent { kind, t: world.t })
        .collect()
}
