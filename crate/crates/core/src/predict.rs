//! Short-horizon kinematic queries about the scene, shared by the encoder and the expert.

use crate::geometry::{boxes_overlap, wrap_angle, Polyline, Pose, Vec2};
use crate::sim::{WorldState, EGO_HALF_EXTENTS};

/// Horizon of conflict prediction (s).
pub const PREDICTION_HORIZON: f64 = 4.0;
const PREDICTION_STEP: f64 = 0.1;
/// Safety margins added to the ego box during prediction (m).
const LONGITUDINAL_MARGIN: f64 = 1.0;
const LATERAL_MARGIN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneOccupant {
    /// Route arc offset relative to the ego (m); positive is ahead.
    pub ds: f64,
    pub speed: f64,
}

/// Agents travelling along the route whose projection lies in `lane`.
pub fn lane_occupants(world: &WorldState, lane: i32) -> Vec<LaneOccupant> {
    let scenario = &world.scenario;
    let s_ego = world.ego_projection().s;
    world
        .agents
        .iter()
        .filter_map(|a| {
            let p = scenario.route.project(a.pose.position());
            let heading_gap = wrap_angle(a.pose.heading - scenario.route.heading_at(p.s));
            let in_lane = (p.lateral - scenario.lane_center(lane)).abs() < 0.5 * scenario.lane_width();
            (in_lane && heading_gap.abs() < 0.6).then_some(LaneOccupant {
                ds: p.s - s_ego,
                speed: a.speed,
            })
        })
        .collect()
}

/// Nearest occupant ahead of the ego in `lane`.
pub fn lead_in_lane(world: &WorldState, lane: i32) -> Option<LaneOccupant> {
    lane_occupants(world, lane)
        .into_iter()
        .filter(|o| o.ds > 0.0)
        .min_by(|a, b| a.ds.total_cmp(&b.ds))
}

/// `lane` exists and has no occupant within `[-behind, ahead]` of the ego.
pub fn lane_clear(world: &WorldState, lane: i32, behind: f64, ahead: f64) -> bool {
    world.scenario.has_lane(lane)
        && lane_occupants(world, lane)
            .iter()
            .all(|o| o.ds < -behind || o.ds > ahead)
}

/// First time at which the ego, driving `path` (ego frame) under `speed_at`, comes into
/// conflict with an agent moving at constant velocity.
pub fn time_to_conflict(world: &WorldState, path: &[Vec2], speed_at: impl Fn(f64) -> f64) -> Option<f64> {
    let pose = world.ego.pose;
    let line = Polyline::new(std::iter::once(Vec2::ZERO).chain(path.iter().copied()))?;
    let ego_half = [
        EGO_HALF_EXTENTS[0] + LONGITUDINAL_MARGIN,
        EGO_HALF_EXTENTS[1] + LATERAL_MARGIN,
    ];
    let steps = (PREDICTION_HORIZON / PREDICTION_STEP).round() as usize;
    let mut s = 0.0;
    for k in 1..=steps {
        let t = k as f64 * PREDICTION_STEP;
        s += speed_at(t) * PREDICTION_STEP;
        let local = line.point_at(s);
        let dir = line.point_at(s + 0.5) - local;
        let world_pos = pose.to_world(local);
        let ego_pose = Pose::new(world_pos.x, world_pos.y, pose.heading + dir.y.atan2(dir.x));
        for agent in &world.agents {
            let p = agent.pose.position() + Vec2::from_angle(agent.pose.heading) * (agent.speed * t);
            let ap = Pose::new(p.x, p.y, agent.pose.heading);
            if boxes_overlap(&ego_pose, ego_half, &ap, agent.half_extents) {
                return Some(t);
            }
        }
    }
    None
}
