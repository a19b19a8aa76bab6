//! Parameter-free featurisation of a world state into a fixed-size ego-frame vector.
//!
//! Layout (index: feature, scale):
//!
//! | idx     | feature                                                            |
//! |---------|--------------------------------------------------------------------|
//! | 0       | ego speed / 10                                                     |
//! | 1       | route heading minus ego heading (rad, wrapped)                     |
//! | 2       | signed lateral offset from the route / 5                           |
//! | 3       | offset from the nearest lane centre / lane width                   |
//! | 4, 5    | lane exists to the left / right of the current lane (0 or 1)       |
//! | 6..10   | lateral offset of route points 5, 10, 15, 20 m ahead, ego frame / 25 |
//! | 10..15  | route curvature 5, 10, 15, 20, 25 m ahead × 8                      |
//! | 15..51  | 6 nearest agents × (x/50, y/50, cos Δψ, sin Δψ, speed/10, present) |
//! | 51      | gap to the lead vehicle in the ego lane / 50 (1 when none)         |
//! | 52      | lead vehicle speed / 10                                            |
//! | 53, 54  | left / right lane exists and is clear from 10 m behind to 35 m ahead |
//! | 55      | conflict urgency along the lane at constant speed, 1 − ttc / 4     |
//! | 56      | conflict urgency when pulling away from rest, 1 − ttc / 4          |
//! | 57      | arc distance to next traffic-control region / 50, in [-1, 1]       |
//! | 58..61  | that control is red / green / stop sign                            |
//! | 61      | ego has already stopped inside that stop region                    |
//! | 62      | remaining route fraction                                           |
//! | 63      | remaining time fraction                                            |

use crate::action::oracle_path;
use crate::geometry::wrap_angle;
use crate::meta_action::PathAction;
use crate::predict::{lane_clear, lead_in_lane, time_to_conflict, PREDICTION_HORIZON};
use crate::sim::{ControlStatus, WorldState, STOP_SPEED_THRESHOLD};
use serde::{Deserialize, Serialize};

pub const EMBEDDING_DIM: usize = 64;
pub const NEAREST_AGENTS: usize = 6;
pub const AGENT_FEATURES: usize = 6;
pub const LOOKAHEADS: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 25.0];

/// Versioned description of the layout above, embedded in dataset files.
pub const SCHEMA: &str = "ego-frame-v2:d64:speed/10,head_err,lat/5,lane_off/w,lane_l,lane_r,\
route_y4/25,curv5x8,agents6x[x/50,y/50,cos,sin,v/10,present],lead[gap/50,v/10],clear[l,r],\
urgency[cruise,pull_away],ctrl[dist/50,red,green,stop,stopped],route_remaining,time_remaining";

const ROUTE_OFFSET: usize = 6;
const CURVATURE_OFFSET: usize = 10;
const AGENTS_OFFSET: usize = 15;
const CORRIDOR_OFFSET: usize = AGENTS_OFFSET + NEAREST_AGENTS * AGENT_FEATURES;
const CONTROL_OFFSET: usize = CORRIDOR_OFFSET + 6;
/// Occupancy window used for the adjacent-lane clearance flags (m behind, m ahead).
pub const CLEAR_WINDOW: (f64, f64) = (10.0, 35.0);
/// Acceleration and speed cap of the pull-away profile used for urgency (m/s², m/s).
const PULL_AWAY: (f64, f64) = (2.0, 5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEmbedding {
    pub values: Vec<f64>,
    pub frame_t: f64,
}

impl StateEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn encode(world: &WorldState) -> StateEmbedding {
    let mut f = vec![0.0; EMBEDDING_DIM];
    let scenario = &world.scenario;
    let route = &scenario.route;
    let ego = &world.ego;
    let proj = world.ego_projection();

    f[0] = ego.speed / 10.0;
    f[1] = wrap_angle(route.heading_at(proj.s) - ego.pose.heading);
    f[2] = proj.lateral / 5.0;
    let lane = scenario.lane_index(proj.lateral);
    f[3] = (proj.lateral - scenario.lane_center(lane)) / scenario.lane_width();
    f[4] = scenario.has_lane(lane + 1) as u8 as f64;
    f[5] = scenario.has_lane(lane - 1) as u8 as f64;

    for (i, d) in LOOKAHEADS.iter().enumerate() {
        if i < 4 {
            f[ROUTE_OFFSET + i] = ego.pose.to_local(route.point_at(proj.s + d)).y / 25.0;
        }
        f[CURVATURE_OFFSET + i] = route.curvature_at(proj.s + d, 2.0) * 8.0;
    }

    let mut order: Vec<(f64, usize)> = world
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| (a.pose.position().dist(ego.pose.position()), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (slot, (_, i)) in order.iter().take(NEAREST_AGENTS).enumerate() {
        let a = &world.agents[*i];
        let rel = ego.pose.to_local(a.pose.position());
        let dpsi = a.pose.heading - ego.pose.heading;
        let o = AGENTS_OFFSET + slot * AGENT_FEATURES;
        f[o] = rel.x / 50.0;
        f[o + 1] = rel.y / 50.0;
        f[o + 2] = dpsi.cos();
        f[o + 3] = dpsi.sin();
        f[o + 4] = a.speed / 10.0;
        f[o + 5] = 1.0;
    }

    let c = CORRIDOR_OFFSET;
    match lead_in_lane(world, lane) {
        Some(o) if o.ds < 50.0 => {
            f[c] = o.ds / 50.0;
            f[c + 1] = o.speed / 10.0;
        }
        _ => f[c] = 1.0,
    }
    f[c + 2] = lane_clear(world, lane + 1, CLEAR_WINDOW.0, CLEAR_WINDOW.1) as u8 as f64;
    f[c + 3] = lane_clear(world, lane - 1, CLEAR_WINDOW.0, CLEAR_WINDOW.1) as u8 as f64;
    let lane_path = oracle_path(world, PathAction::LaneFollow);
    let urgency = |ttc: Option<f64>| ttc.map_or(0.0, |t| 1.0 - t / PREDICTION_HORIZON);
    let v = ego.speed;
    f[c + 4] = urgency(time_to_conflict(world, &lane_path, |_| v));
    f[c + 5] = urgency(time_to_conflict(world, &lane_path, |t| {
        (v + PULL_AWAY.0 * t).min(PULL_AWAY.1.max(v))
    }));

    let next = world
        .controls
        .iter()
        .filter(|c| c.s_end > proj.s)
        .min_by(|a, b| a.s_start.total_cmp(&b.s_start));
    match next {
        Some(c) => {
            f[CONTROL_OFFSET] = ((c.s_start - proj.s) / 50.0).clamp(-1.0, 1.0);
            f[CONTROL_OFFSET + 1] = (c.status == ControlStatus::RedLight) as u8 as f64;
            f[CONTROL_OFFSET + 2] = (c.status == ControlStatus::GreenLight) as u8 as f64;
            f[CONTROL_OFFSET + 3] = (c.status == ControlStatus::StopSign) as u8 as f64;
            f[CONTROL_OFFSET + 4] = c
                .min_speed_inside
                .is_some_and(|v| v < STOP_SPEED_THRESHOLD) as u8 as f64;
        }
        None => f[CONTROL_OFFSET] = 1.0,
    }

    f[62] = 1.0 - world.progress;
    f[63] = (1.0 - world.t / world.time_limit()).max(0.0);

    StateEmbedding {
        values: f,
        frame_t: world.t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{load_scenario, Category, ScenarioSpec, StartPose};

    fn empty() -> ScenarioSpec {
        ScenarioSpec {
            id: "enc".into(),
            category: Category::Merging,
            route: vec![[0.0, 0.0], [60.0, 0.0], [90.0, 20.0]],
            lane_width: 3.5,
            lanes_left: 0,
            lanes_right: 0,
            agents: vec![],
            controls: vec![],
            time_limit: 30.0,
            ego_start: StartPose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
        }
    }

    #[test]
    fn stationary_empty_scene() {
        let w = load_scenario(&empty(), 0).unwrap();
        let e = encode(&w);
        assert_eq!(e.dim(), EMBEDDING_DIM);
        assert_eq!(e.values[0], 0.0);
        assert!(e.values[AGENTS_OFFSET..CORRIDOR_OFFSET].iter().all(|v| *v == 0.0));
        // No lead, no adjacent lanes, nothing to conflict with.
        assert_eq!(&e.values[CORRIDOR_OFFSET..CONTROL_OFFSET], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.values[CONTROL_OFFSET], 1.0);
        assert_eq!(e.values[62], 1.0);
        assert_eq!(e.values[63], 1.0);
        assert_eq!(encode(&w), e);
    }

    #[test]
    fn invariant_to_rigid_motion() {
        let a = empty();
        let (c, sn) = (0.6f64.cos(), 0.6f64.sin());
        let mv = |p: [f64; 2]| [c * p[0] - sn * p[1] + 40.0, sn * p[0] + c * p[1] - 7.0];
        let mut b = a.clone();
        b.route = a.route.iter().map(|p| mv(*p)).collect();
        let s0 = mv([0.0, 0.0]);
        b.ego_start = StartPose {
            x: s0[0],
            y: s0[1],
            heading: 0.6,
        };
        let ea = encode(&load_scenario(&a, 0).unwrap());
        let eb = encode(&load_scenario(&b, 0).unwrap());
        for (x, y) in ea.values.iter().zip(&eb.values) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}
