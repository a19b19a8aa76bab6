//! Deterministic rule-based driver used to label imitation data.
//!
//! Path rule: overtake a slow or stopped vehicle blocking the current lane when the adjacent
//! lane is clear, return to the route lane once it is clear, turn on tight route arcs, and
//! follow the lane otherwise. Speed rule, by priority: traffic controls, predicted conflicts
//! with other agents (time-to-conflict), then a cruise band.

use crate::action::oracle::{oracle_path, FAST_SPEED, MODERATE_SPEED, SPEED_DELTA};
use crate::meta_action::{MetaAction, PathAction, SpeedAction};
use crate::predict::{lane_clear, lane_occupants, time_to_conflict};
use crate::sim::{ControlStatus, WorldState, STOP_SPEED_THRESHOLD};

/// Time-to-conflict below which the expert brakes hard (s).
pub const RAPID_TTC: f64 = 1.5;
/// Time-to-conflict below which the expert slows down (s).
pub const SLOW_TTC: f64 = 3.0;
/// Gap ahead in the current lane within which a slow vehicle triggers an overtake (m).
const BLOCK_DISTANCE: f64 = 25.0;
const TURN_CURVATURE: f64 = 0.09;
const LIGHT_HORIZON: f64 = 30.0;
const STOP_SIGN_HORIZON: f64 = 15.0;

pub fn expert_label(world: &WorldState) -> MetaAction {
    let path = expert_path(world);
    let speed = expert_speed(world, path);
    MetaAction::new(speed, path)
}

fn expert_path(world: &WorldState) -> PathAction {
    let scenario = &world.scenario;
    let proj = world.ego_projection();
    let lane = scenario.lane_index(proj.lateral);

    let blocked = lane_occupants(world, lane)
        .iter()
        .any(|o| o.ds > 0.0 && o.ds < BLOCK_DISTANCE && o.speed < MODERATE_SPEED - 1.0);
    if blocked {
        if lane_clear(world, lane + 1, 10.0, BLOCK_DISTANCE + 10.0) {
            return PathAction::ChangeLaneLeft;
        }
        if lane_clear(world, lane - 1, 10.0, BLOCK_DISTANCE + 10.0) {
            return PathAction::ChangeLaneRight;
        }
    } else if lane != 0 {
        let toward = if lane > 0 { lane - 1 } else { lane + 1 };
        if lane_clear(world, toward, 12.0, BLOCK_DISTANCE) {
            return if lane > 0 {
                PathAction::ChangeLaneRight
            } else {
                PathAction::ChangeLaneLeft
            };
        }
    }

    let curvature = scenario.route.curvature_at(proj.s + 2.0, 2.0);
    if curvature.abs() > TURN_CURVATURE {
        return if curvature > 0.0 {
            PathAction::TurnLeft
        } else {
            PathAction::TurnRight
        };
    }
    PathAction::LaneFollow
}

/// Distance needed to stop from `v`, including tracking lag (m).
pub fn stopping_distance(v: f64) -> f64 {
    v * v / 4.0 + 0.5 * v
}

fn expert_speed(world: &WorldState, path: PathAction) -> SpeedAction {
    let v = world.ego.speed;
    let scenario = &world.scenario;
    let proj = world.ego_projection();

    if let Some(c) = world
        .controls
        .iter()
        .filter(|c| c.s_end > proj.s)
        .min_by(|a, b| a.s_start.total_cmp(&b.s_start))
    {
        match c.status {
            ControlStatus::RedLight => {
                let d = c.s_start - proj.s;
                if c.ego_inside || d < stopping_distance(v) + 3.0 {
                    return SpeedAction::Stop;
                }
                if d < LIGHT_HORIZON {
                    return SpeedAction::MaintainSlowSpeed;
                }
            }
            ControlStatus::StopSign => {
                let stopped = c.min_speed_inside.is_some_and(|m| m < STOP_SPEED_THRESHOLD);
                if !stopped {
                    let d = c.s_start + 0.5 * (c.s_end - c.s_start) - proj.s;
                    if d < stopping_distance(v) + 0.5 {
                        return SpeedAction::Stop;
                    }
                    if d < STOP_SIGN_HORIZON {
                        return SpeedAction::MaintainSlowSpeed;
                    }
                }
            }
            _ => {}
        }
    }

    let planned = oracle_path(world, path);
    if let Some(ttc) = time_to_conflict(world, &planned, |_| v) {
        if ttc < RAPID_TTC {
            return if v > 0.5 {
                SpeedAction::SlowdownRapidly
            } else {
                SpeedAction::Stop
            };
        }
        if ttc < SLOW_TTC {
            return if v > 1.0 {
                SpeedAction::SlowDown
            } else {
                SpeedAction::Stop
            };
        }
    }
    if v < 1.0 {
        let pull_away = |t: f64| (v + 2.0 * t).min(MODERATE_SPEED);
        if time_to_conflict(world, &planned, pull_away).is_some_and(|t| t < SLOW_TTC) {
            return SpeedAction::Stop;
        }
    }

    if matches!(path, PathAction::TurnLeft | PathAction::TurnRight) {
        return SpeedAction::MaintainSlowSpeed;
    }
    let ahead_curvature = (0..6)
        .map(|i| scenario.route.curvature_at(proj.s + 5.0 * i as f64, 2.5).abs())
        .fold(0.0, f64::max);
    let open_road = scenario.spec.lanes_left + scenario.spec.lanes_right > 0
        && ahead_curvature < 0.02
        && world
            .agents
            .iter()
            .all(|a| a.pose.position().dist(world.ego.pose.position()) > 40.0)
        && world.controls.iter().all(|c| c.s_end < proj.s || c.s_start - proj.s > 60.0);
    if open_road && proj.s + 40.0 < scenario.route.length() {
        return if v < FAST_SPEED - 2.0 * SPEED_DELTA {
            SpeedAction::SpeedUp
        } else {
            SpeedAction::MaintainFastSpeed
        };
    }
    if ahead_curvature > 0.05 {
        return SpeedAction::MaintainSlowSpeed;
    }
    if v < MODERATE_SPEED - 1.5 * SPEED_DELTA {
        SpeedAction::SpeedUp
    } else {
        SpeedAction::MaintainModerateSpeed
    }
}
