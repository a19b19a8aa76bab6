//! Ego dynamics (kinematic bicycle) and the trajectory tracking controller.

use super::world::EgoState;
use crate::geometry::{wrap_angle, Polyline, Pose, Vec2};
use crate::trajectory::{Trajectory, SPEED_INTERVAL, SPEED_POINTS};

pub const WHEELBASE: f64 = 2.7;
/// Integration substep (s).
pub const SUBSTEP: f64 = 0.1;
/// Pure-pursuit lookahead distance (m).
pub const LOOKAHEAD: f64 = 4.0;
pub const SPEED_GAIN: f64 = 1.0;
/// Preview horizon of the speed reference; the proportional gain is applied per this horizon.
pub const SPEED_PREVIEW: f64 = 0.5;
pub const MAX_STEER: f64 = 0.6;
pub const MAX_ACCEL: f64 = 4.0;
pub const MAX_DECEL: f64 = 8.0;

/// Follows one trajectory, fixed in the world frame at the pose where it was issued.
#[derive(Debug, Clone)]
pub struct Tracker {
    path: Polyline,
    /// Average speed over each speed-waypoint interval, attributed to the interval midpoint.
    midpoint_speeds: [f64; SPEED_POINTS],
}

impl Tracker {
    pub fn new(origin: &Pose, traj: &Trajectory) -> Self {
        let world_pts = std::iter::once(origin.position())
            .chain(traj.path.iter().map(|p| origin.to_world(*p)));
        let path = Polyline::new(world_pts).unwrap_or_else(|| {
            let ahead = origin.to_world(Vec2::new(1.0, 0.0));
            Polyline::new([origin.position(), ahead]).unwrap()
        });
        let mut midpoint_speeds = [0.0; SPEED_POINTS];
        let mut prev = Vec2::ZERO;
        for (k, w) in traj.speed.iter().enumerate() {
            midpoint_speeds[k] = w.dist(prev) / SPEED_INTERVAL;
            prev = *w;
        }
        Tracker {
            path,
            midpoint_speeds,
        }
    }

    /// Speed reference at time `tau` after the trajectory was issued.
    pub fn reference_speed(&self, tau: f64) -> f64 {
        let m = &self.midpoint_speeds;
        let first = 0.5 * SPEED_INTERVAL;
        if tau <= first {
            return m[0];
        }
        let x = (tau - first) / SPEED_INTERVAL;
        let k = x.floor() as usize;
        if k + 1 >= SPEED_POINTS {
            return m[SPEED_POINTS - 1];
        }
        let frac = x - k as f64;
        m[k] + (m[k + 1] - m[k]) * frac
    }

    /// Returns `(acceleration, steering angle)`.
    pub fn command(&self, ego: &EgoState, tau: f64) -> (f64, f64) {
        let target_speed = self.reference_speed(tau + SPEED_PREVIEW);
        let accel = (SPEED_GAIN * (target_speed - ego.speed) / SPEED_PREVIEW)
            .clamp(-MAX_DECEL, MAX_ACCEL);
        (accel, self.pure_pursuit(&ego.pose))
    }

    fn pure_pursuit(&self, pose: &Pose) -> f64 {
        let s0 = self.path.project(pose.position()).s;
        let target = pose.to_local(self.path.point_at(s0 + LOOKAHEAD));
        let ld = target.norm();
        if ld < 1e-9 {
            return 0.0;
        }
        let alpha = target.y.atan2(target.x);
        (2.0 * WHEELBASE * alpha.sin() / ld)
            .atan()
            .clamp(-MAX_STEER, MAX_STEER)
    }
}

/// Advances the kinematic bicycle by `h` seconds; speed never goes negative.
pub fn integrate(ego: &mut EgoState, accel: f64, steer: f64, h: f64) {
    let v0 = ego.speed;
    let mut v1 = v0 + accel * h;
    let ds = if v1 < 0.0 {
        v1 = 0.0;
        if accel < 0.0 {
            v0 * v0 / (2.0 * -accel)
        } else {
            0.0
        }
    } else {
        0.5 * (v0 + v1) * h
    };
    if ds > 0.0 {
        let dtheta = ds * steer.tan() / WHEELBASE;
        let mid = ego.pose.heading + 0.5 * dtheta;
        ego.pose.x += ds * mid.cos();
        ego.pose.y += ds * mid.sin();
        ego.pose.heading = wrap_angle(ego.pose.heading + dtheta);
    }
    ego.speed = v1;
}
