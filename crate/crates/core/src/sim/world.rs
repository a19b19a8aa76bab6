use super::scenario::{ControlKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::geometry::{Polyline, Pose, Projection, Vec2};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Ego bounding-box half extents (length, width) in metres.
pub const EGO_HALF_EXTENTS: [f64; 2] = [2.25, 1.0];

/// A validated scenario with its geometry precomputed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub route: Polyline,
    pub agent_paths: Vec<Polyline>,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let route = spec.route_polyline().expect("validated route");
        let agent_paths = spec
            .agents
            .iter()
            .map(|a| Polyline::new(a.path.iter().copied().map(Vec2::from)).expect("validated path"))
            .collect();
        Ok(Scenario {
            spec,
            route,
            agent_paths,
        })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn lane_width(&self) -> f64 {
        self.spec.lane_width
    }

    /// Lateral extent `[right, left]` of the drivable road relative to the route.
    pub fn road_bounds(&self) -> (f64, f64) {
        let w = self.spec.lane_width;
        (
            -(self.spec.lanes_right as f64 + 0.5) * w,
            (self.spec.lanes_left as f64 + 0.5) * w,
        )
    }

    /// Lane index of a lateral offset: 0 is the route lane, positive to the left.
    pub fn lane_index(&self, lateral: f64) -> i32 {
        let idx = (lateral / self.spec.lane_width).round() as i32;
        idx.clamp(-(self.spec.lanes_right as i32), self.spec.lanes_left as i32)
    }

    pub fn lane_center(&self, lane: i32) -> f64 {
        lane as f64 * self.spec.lane_width
    }

    pub fn has_lane(&self, lane: i32) -> bool {
        lane >= -(self.spec.lanes_right as i32) && lane <= self.spec.lanes_left as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose,
    pub speed: f64,
    pub half_extents: [f64; 2],
    /// Arc-length position along the agent's own path.
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlStatus {
    RedLight,
    GreenLight,
    StopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub status: ControlStatus,
    /// Route-aligned pose of the start of the trigger region.
    pub pose: Pose,
    pub s_start: f64,
    pub s_end: f64,
    /// Whether the ego was inside the trigger region at the previous sample.
    pub ego_inside: bool,
    /// Lowest ego speed observed inside the region during the current visit.
    pub min_speed_inside: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PenaltyKind {
    Collision,
    RedLight,
    RouteDeviation,
    StopSignViolation,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 4] = [
        PenaltyKind::Collision,
        PenaltyKind::RedLight,
        PenaltyKind::RouteDeviation,
        PenaltyKind::StopSignViolation,
    ];

    pub fn short(self) -> &'static str {
        match self {
            PenaltyKind::Collision => "C",
            PenaltyKind::RedLight => "TL",
            PenaltyKind::RouteDeviation => "RD",
            PenaltyKind::StopSignViolation => "S",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEvent {
    pub kind: PenaltyKind,
    pub t: f64,
}

/// Which penalty kinds terminate an episode and carry a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltySet {
    pub collision: bool,
    pub red_light: bool,
    pub route_deviation: bool,
    pub stop_sign: bool,
}

impl Default for PenaltySet {
    fn default() -> Self {
        PenaltySet::all()
    }
}

impl PenaltySet {
    pub fn all() -> Self {
        PenaltySet {
            collision: true,
            red_light: true,
            route_deviation: true,
            stop_sign: true,
        }
    }

    pub fn none() -> Self {
        PenaltySet {
            collision: false,
            red_light: false,
            route_deviation: false,
            stop_sign: false,
        }
    }

    pub fn from_kinds(kinds: &[PenaltyKind]) -> Self {
        let mut s = PenaltySet::none();
        for k in kinds {
            s.set(*k, true);
        }
        s
    }

    pub fn contains(&self, kind: PenaltyKind) -> bool {
        match kind {
            PenaltyKind::Collision => self.collision,
            PenaltyKind::RedLight => self.red_light,
            PenaltyKind::RouteDeviation => self.route_deviation,
            PenaltyKind::StopSignViolation => self.stop_sign,
        }
    }

    pub fn set(&mut self, kind: PenaltyKind, on: bool) {
        match kind {
            PenaltyKind::Collision => self.collision = on,
            PenaltyKind::RedLight => self.red_light = on,
            PenaltyKind::RouteDeviation => self.route_deviation = on,
            PenaltyKind::StopSignViolation => self.stop_sign = on,
        }
    }

    /// Label such as `C+TL+RD`.
    pub fn label(&self) -> String {
        let parts: Vec<_> = PenaltyKind::ALL
            .iter()
            .filter(|k| self.contains(**k))
            .map(|k| k.short())
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WorldState {
    #[serde(skip)]
    pub scenario: Arc<Scenario>,
    pub scenario_id: String,
    pub seed: u64,
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
    pub controls: Vec<ControlState>,
    pub t: f64,
    pub step_index: u64,
    /// Running maximum of route completion.
    pub progress: f64,
    pub finished: bool,
    pub penalties: PenaltySet,
}

impl WorldState {
    pub fn route(&self) -> &Polyline {
        &self.scenario.route
    }

    pub fn ego_projection(&self) -> Projection {
        self.scenario.route.project(self.ego.pose.position())
    }

    pub fn time_limit(&self) -> f64 {
        self.scenario.spec.time_limit
    }

    /// Whether the ego centre lies in a control's trigger region.
    pub fn ego_in_region(&self, control: &ControlState, proj: &Projection) -> bool {
        let (lo, hi) = self.scenario.road_bounds();
        proj.s >= control.s_start
            && proj.s <= control.s_end
            && proj.lateral >= lo
            && proj.lateral <= hi
    }

    /// JSON snapshot used for determinism comparisons and traces.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("world state serialises")
    }

    pub fn check_valid(&self) -> Result<()> {
        let e = &self.ego;
        if !(e.pose.x.is_finite() && e.pose.y.is_finite() && e.speed.is_finite()) {
            return Err(Error::NumericInput("ego state is not finite".into()));
        }
        Ok(())
    }
}

pub(crate) fn control_status(kind: ControlKind, red: bool) -> ControlStatus {
    match (kind, red) {
        (ControlKind::StopSign, _) => ControlStatus::StopSign,
        (ControlKind::TrafficLight, true) => ControlStatus::RedLight,
        (ControlKind::TrafficLight, false) => ControlStatus::GreenLight,
    }
}
