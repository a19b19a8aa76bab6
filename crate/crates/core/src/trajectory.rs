//! The executable action: geometric path plus temporal speed waypoints, both in the ego frame.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};

pub const PATH_POINTS: usize = 20;
pub const SPEED_POINTS: usize = 6;
/// Consecutive path waypoint spacing (m).
pub const PATH_SPACING: f64 = 1.0;
/// Interval between speed waypoints (s).
pub const SPEED_INTERVAL: f64 = 0.5;
/// Number of scalar coordinates in a trajectory (path then speed, x/y interleaved).
pub const TRAJECTORY_DIM: usize = 2 * (PATH_POINTS + SPEED_POINTS);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: Vec<Vec2>,
    pub speed: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(path: Vec<Vec2>, speed: Vec<Vec2>) -> Result<Self> {
        let t = Trajectory { path, speed };
        t.validate()?;
        Ok(t)
    }

    /// Checks point counts and finiteness. Spacing is a property of the generator, not checked here.
    pub fn validate(&self) -> Result<()> {
        if self.path.len() != PATH_POINTS {
            return Err(Error::Argument(format!(
                "trajectory has {} path waypoints, expected {PATH_POINTS}",
                self.path.len()
            )));
        }
        if self.speed.len() != SPEED_POINTS {
            return Err(Error::Argument(format!(
                "trajectory has {} speed waypoints, expected {SPEED_POINTS}",
                self.speed.len()
            )));
        }
        if let Some(i) = self.path.iter().position(|p| !p.is_finite()) {
            return Err(Error::NumericInput(format!("path waypoint {i} is not finite")));
        }
        if let Some(i) = self.speed.iter().position(|p| !p.is_finite()) {
            return Err(Error::NumericInput(format!("speed waypoint {i} is not finite")));
        }
        Ok(())
    }

    /// Distances between consecutive path waypoints, starting from the ego origin.
    pub fn path_spacings(&self) -> Vec<f64> {
        std::iter::once(Vec2::ZERO)
            .chain(self.path.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .skip(1)
            .map(|w| w[0].dist(w[1]))
            .collect()
    }

    /// Flattens to `[path x0, y0, …, speed x0, y0, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.path
            .iter()
            .chain(self.speed.iter())
            .flat_map(|p| [p.x, p.y])
            .collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != TRAJECTORY_DIM {
            return Err(Error::Argument(format!(
                "flat trajectory has {} values, expected {TRAJECTORY_DIM}",
                flat.len()
            )));
        }
        let pts: Vec<Vec2> = flat.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
        Trajectory::new(pts[..PATH_POINTS].to_vec(), pts[PATH_POINTS..].to_vec())
    }

    /// Mean absolute coordinate error against another trajectory.
    pub fn mean_l1(&self, other: &Trajectory) -> f64 {
        let a = self.to_flat();
        let b = other.to_flat();
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }
}
