//! Scenario descriptions and their on-disk TOML form.

use crate::error::{Error, Result};
use crate::geometry::{Polyline, Vec2};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Minimum route length accepted by the loader (m).
pub const MIN_ROUTE_LENGTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Merging,
    Overtaking,
    EmergencyBrake,
    GiveWay,
    TrafficSign,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Merging,
        Category::Overtaking,
        Category::EmergencyBrake,
        Category::GiveWay,
        Category::TrafficSign,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Category::Merging => "M",
            Category::Overtaking => "O",
            Category::EmergencyBrake => "EB",
            Category::GiveWay => "GW",
            Category::TrafficSign => "TS",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Behavior {
    /// Follows its speed profile regardless of the ego.
    Scripted,
    /// Follows its speed profile but brakes for an ego directly ahead.
    Reactive,
}

/// A scripted traffic participant moving along its own polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    pub path: Vec<[f64; 2]>,
    /// Initial arc-length position on `path` (m).
    #[serde(default)]
    pub start_s: f64,
    /// Piecewise-linear `(t, speed)` table; held constant outside its time range.
    pub speed_profile: Vec<[f64; 2]>,
    #[serde(default = "default_half_extents")]
    pub half_extents: [f64; 2],
    pub behavior: Behavior,
}

fn default_half_extents() -> [f64; 2] {
    [2.25, 1.0]
}

impl AgentScript {
    pub fn speed_at(&self, t: f64) -> f64 {
        interpolate_table(&self.speed_profile, t)
    }
}

pub(crate) fn interpolate_table(table: &[[f64; 2]], t: f64) -> f64 {
    match table {
        [] => 0.0,
        [only] => only[1],
        _ => {
            if t <= table[0][0] {
                return table[0][1];
            }
            for w in table.windows(2) {
                let ([t0, v0], [t1, v1]) = (w[0], w[1]);
                if t <= t1 {
                    let span = t1 - t0;
                    return if span <= 0.0 {
                        v1
                    } else {
                        v0 + (v1 - v0) * (t - t0) / span
                    };
                }
            }
            table[table.len() - 1][1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlKind {
    TrafficLight,
    StopSign,
}

/// A traffic control whose trigger region spans the whole road over `[s, s + length]` of the route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficControl {
    pub kind: ControlKind,
    pub s: f64,
    #[serde(default = "default_region_length")]
    pub length: f64,
    /// Lights are red during `[red_from, red_until)` and green otherwise.
    #[serde(default)]
    pub red_from: f64,
    #[serde(default)]
    pub red_until: f64,
}

fn default_region_length() -> f64 {
    4.0
}

impl TrafficControl {
    pub fn is_red(&self, t: f64) -> bool {
        self.kind == ControlKind::TrafficLight && t >= self.red_from && t < self.red_until
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub category: Category,
    /// Reference centreline of the ego lane (m).
    pub route: Vec<[f64; 2]>,
    pub lane_width: f64,
    /// Additional lanes parallel to the route on each side.
    #[serde(default)]
    pub lanes_left: u32,
    #[serde(default)]
    pub lanes_right: u32,
    #[serde(default)]
    pub agents: Vec<AgentScript>,
    #[serde(default)]
    pub controls: Vec<TrafficControl>,
    pub time_limit: f64,
    pub ego_start: StartPose,
}

fn finite_points(field: &str, pts: &[[f64; 2]]) -> Result<()> {
    if pts.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(field, "contains non-finite coordinates"))
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        if self.route.len() < 2 {
            return Err(Error::validation(
                "route",
                format!("needs at least 2 points, got {}", self.route.len()),
            ));
        }
        finite_points("route", &self.route)?;
        let line = self
            .route_polyline()
            .ok_or_else(|| Error::validation("route", "points are all identical"))?;
        if line.length() < MIN_ROUTE_LENGTH {
            return Err(Error::validation(
                "route",
                format!("length {:.2} m is below {MIN_ROUTE_LENGTH} m", line.length()),
            ));
        }
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return Err(Error::validation("lane_width", "must be positive"));
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::validation("time_limit", "must be positive"));
        }
        let StartPose { x, y, heading } = self.ego_start;
        if !(x.is_finite() && y.is_finite() && heading.is_finite()) {
            return Err(Error::validation("ego_start", "must be finite"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let field = format!("agents[{i}].path");
            finite_points(&field, &a.path)?;
            if Polyline::new(a.path.iter().copied().map(Vec2::from)).is_none() {
                return Err(Error::validation(field, "needs at least 2 distinct points"));
            }
            if a.speed_profile.is_empty() {
                return Err(Error::validation(
                    format!("agents[{i}].speed_profile"),
                    "must not be empty",
                ));
            }
            finite_points(&format!("agents[{i}].speed_profile"), &a.speed_profile)?;
            if a.speed_profile.iter().any(|[_, v]| *v < 0.0) {
                return Err(Error::validation(
                    format!("agents[{i}].speed_profile"),
                    "speeds must be non-negative",
                ));
            }
            if a.half_extents.iter().any(|h| !(*h > 0.0)) {
                return Err(Error::validation(
                    format!("agents[{i}].half_extents"),
                    "must be positive",
                ));
            }
        }
        for (i, c) in self.controls.iter().enumerate() {
            if !(c.s.is_finite() && c.length > 0.0 && c.length.is_finite()) {
                return Err(Error::validation(
                    format!("controls[{i}]"),
                    "needs finite s and positive length",
                ));
            }
        }
        Ok(())
    }

    pub fn route_polyline(&self) -> Option<Polyline> {
        Polyline::new(self.route.iter().copied().map(Vec2::from))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// Loads every `*.toml` scenario in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<ScenarioSpec>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ScenarioSpec::load(p)).collect()
}
