//! Procedural trajectory primitives, one per meta-action. Also serves as the expert generator.

use crate::geometry::{Polyline, Vec2};
use crate::meta_action::{MetaAction, PathAction, SpeedAction};
use crate::sim::WorldState;
use crate::trajectory::{Trajectory, PATH_POINTS, PATH_SPACING, SPEED_INTERVAL, SPEED_POINTS};

pub const TURN_RADIUS: f64 = 8.0;
pub const LANE_CHANGE_OFFSET: f64 = 3.5;
pub const LANE_CHANGE_LENGTH: f64 = 20.0;
/// Distance over which lane following pulls the ego back onto its lane centre (m).
pub const LANE_KEEP_LENGTH: f64 = 10.0;
const MIN_BLEND_LENGTH: f64 = 5.0;

pub const SLOW_SPEED: f64 = 2.0;
pub const MODERATE_SPEED: f64 = 5.0;
pub const FAST_SPEED: f64 = 8.0;
pub const SPEED_DELTA: f64 = 2.0;
pub const RAPID_SPEED_DELTA: f64 = 4.0;
pub const ACCEL: f64 = 2.0;
pub const RAPID_ACCEL: f64 = 4.0;
pub const MAX_TARGET_SPEED: f64 = 12.0;

/// Target speed and acceleration magnitude for a speed meta-action.
pub fn speed_target(current: f64, action: SpeedAction) -> (f64, f64) {
    let (target, rate) = match action {
        SpeedAction::Stop => (0.0, ACCEL),
        SpeedAction::MaintainSlowSpeed => (SLOW_SPEED, ACCEL),
        SpeedAction::MaintainModerateSpeed => (MODERATE_SPEED, ACCEL),
        SpeedAction::MaintainFastSpeed => (FAST_SPEED, ACCEL),
        SpeedAction::SpeedUp => (current + SPEED_DELTA, ACCEL),
        SpeedAction::SlowDown => (current - SPEED_DELTA, ACCEL),
        SpeedAction::SlowdownRapidly => (current - RAPID_SPEED_DELTA, RAPID_ACCEL),
    };
    (target.clamp(0.0, MAX_TARGET_SPEED), rate)
}

/// Distance travelled after each speed interval when ramping from `v0` toward `target` at `rate`.
pub fn speed_profile_distances(v0: f64, target: f64, rate: f64) -> [f64; SPEED_POINTS] {
    let mut out = [0.0; SPEED_POINTS];
    let ramp_time = (target - v0).abs() / rate;
    let sign = (target - v0).signum();
    let dist_at = |t: f64| {
        if t <= ramp_time {
            v0 * t + 0.5 * sign * rate * t * t
        } else {
            v0 * ramp_time + 0.5 * sign * rate * ramp_time * ramp_time + target * (t - ramp_time)
        }
    };
    for (k, o) in out.iter_mut().enumerate() {
        *o = dist_at(SPEED_INTERVAL * (k + 1) as f64);
    }
    out
}

fn ease_out(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    1.0 - (1.0 - u) * (1.0 - u)
}

fn arc_path(sign: f64) -> Vec<Vec2> {
    let step = 2.0 * (PATH_SPACING / (2.0 * TURN_RADIUS)).asin();
    (1..=PATH_POINTS)
        .map(|k| {
            let phi = step * k as f64;
            Vec2::new(TURN_RADIUS * phi.sin(), sign * TURN_RADIUS * (1.0 - phi.cos()))
        })
        .collect()
}

/// Follows the route offset laterally, blending from the ego's offset to `target_offset`.
fn offset_route_path(world: &WorldState, target_offset: f64, blend_length: f64) -> Vec<Vec2> {
    let route = world.route();
    let proj = world.ego_projection();
    let d0 = proj.lateral;
    // Blend length shrinks with the remaining offset so replanning keeps making progress.
    let blend_length = (blend_length * (target_offset - d0).abs() / LANE_CHANGE_OFFSET)
        .clamp(MIN_BLEND_LENGTH, blend_length);
    let horizon = PATH_POINTS as f64 * PATH_SPACING * 2.0 + 10.0;
    let n = (horizon / 0.5) as usize;
    let dense = (0..=n).map(|i| {
        let u = i as f64 * 0.5;
        let s = proj.s + u;
        let d = d0 + (target_offset - d0) * ease_out(u / blend_length);
        route.point_at(s) + Vec2::from_angle(route.heading_at(s)).perp() * d
    });
    let pose = world.ego.pose;
    match Polyline::new(dense) {
        Some(line) => line
            .chord_walk(pose.position(), 0.0, PATH_SPACING, PATH_POINTS)
            .into_iter()
            .map(|p| pose.to_local(p))
            .collect(),
        None => straight_path(),
    }
}

fn straight_path() -> Vec<Vec2> {
    (1..=PATH_POINTS)
        .map(|k| Vec2::new(k as f64 * PATH_SPACING, 0.0))
        .collect()
}

/// Ego-frame path for a lateral meta-action.
pub fn oracle_path(world: &WorldState, action: PathAction) -> Vec<Vec2> {
    let scenario = &world.scenario;
    let lateral = world.ego_projection().lateral;
    let lane_center = scenario.lane_center(scenario.lane_index(lateral));
    match action {
        PathAction::Straight => straight_path(),
        PathAction::TurnLeft => arc_path(1.0),
        PathAction::TurnRight => arc_path(-1.0),
        PathAction::LaneFollow => offset_route_path(world, lane_center, LANE_KEEP_LENGTH),
        PathAction::ChangeLaneLeft => {
            offset_route_path(world, lane_center + LANE_CHANGE_OFFSET, LANE_CHANGE_LENGTH)
        }
        PathAction::ChangeLaneRight => {
            offset_route_path(world, lane_center - LANE_CHANGE_OFFSET, LANE_CHANGE_LENGTH)
        }
    }
}

/// Places speed waypoints at the given arc lengths along `[origin, path…]`.
pub fn place_along_path(path: &[Vec2], distances: &[f64]) -> Vec<Vec2> {
    let line = Polyline::new(std::iter::once(Vec2::ZERO).chain(path.iter().copied()))
        .unwrap_or_else(|| Polyline::new([Vec2::ZERO, Vec2::new(1.0, 0.0)]).unwrap());
    distances
        .iter()
        .map(|&d| if d <= 0.0 { Vec2::ZERO } else { line.point_at(d) })
        .collect()
}

pub fn oracle_trajectory(world: &WorldState, meta: MetaAction) -> Trajectory {
    let path = oracle_path(world, meta.path);
    let (target, rate) = speed_target(world.ego.speed, meta.speed);
    let distances = speed_profile_distances(world.ego.speed, target, rate);
    let speed = place_along_path(&path, &distances);
    Trajectory { path, speed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speed_profile() {
        let d = speed_profile_distances(5.0, 5.0, 2.0);
        for (k, v) in d.iter().enumerate() {
            assert!((v - 2.5 * (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_then_cruise() {
        // 0 → 2 m/s at 2 m/s²: ramp ends at 1 s having covered 1 m.
        let d = speed_profile_distances(0.0, 2.0, 2.0);
        assert!((d[0] - 0.25).abs() < 1e-12);
        assert!((d[1] - 1.0).abs() < 1e-12);
        assert!((d[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rapid_slowdown_clamps_at_zero() {
        assert_eq!(speed_target(3.0, SpeedAction::SlowdownRapidly), (0.0, RAPID_ACCEL));
        let d = speed_profile_distances(3.0, 0.0, RAPID_ACCEL);
        assert!(d.iter().all(|x| (*x - d[5]).abs() < 1e-12 || *x < d[5]));
        assert!((d[5] - 9.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn arc_spacing_exact() {
        let mut prev = Vec2::ZERO;
        for p in arc_path(1.0) {
            assert!((p.dist(prev) - 1.0).abs() < 1e-12);
            assert!((p.dist(Vec2::new(0.0, TURN_RADIUS)) - TURN_RADIUS).abs() < 1e-12);
            prev = p;
        }
    }
}
