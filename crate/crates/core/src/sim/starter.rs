//! Bundled starter scenarios: at least two per ability category.

use super::scenario::{
    AgentScript, Behavior, Category, ControlKind, ScenarioSpec, StartPose, TrafficControl,
};
use crate::geometry::Vec2;
use std::f64::consts::FRAC_PI_2;

const LANE: f64 = 3.5;

/// Polyline builder that samples straights and arcs densely.
struct Path {
    pts: Vec<[f64; 2]>,
    heading: f64,
}

impl Path {
    fn start(x: f64, y: f64, heading: f64) -> Self {
        Path {
            pts: vec![[x, y]],
            heading,
        }
    }

    fn last(&self) -> Vec2 {
        Vec2::from(*self.pts.last().unwrap())
    }

    fn straight(mut self, length: f64) -> Self {
        let n = (length / 2.0).ceil().max(1.0) as usize;
        let origin = self.last();
        let dir = Vec2::from_angle(self.heading);
        for i in 1..=n {
            let p = origin + dir * (length * i as f64 / n as f64);
            self.pts.push([p.x, p.y]);
        }
        self
    }

    /// Arc of `radius` turning by `angle` (positive = left).
    fn arc(mut self, radius: f64, angle: f64) -> Self {
        let origin = self.last();
        let sign = angle.signum();
        let center = origin + Vec2::from_angle(self.heading).perp() * (sign * radius);
        let n = (radius * angle.abs()).ceil().max(2.0) as usize;
        for i in 1..=n {
            let phi = self.heading + angle * i as f64 / n as f64;
            let p = center + Vec2::from_angle(phi).perp() * (-sign * radius);
            self.pts.push([p.x, p.y]);
        }
        self.heading += angle;
        self
    }

    fn to(mut self, x: f64, y: f64) -> Self {
        let d = Vec2::new(x, y) - self.last();
        self.heading = d.y.atan2(d.x);
        self.straight(d.norm())
    }

    fn done(self) -> Vec<[f64; 2]> {
        self.pts
    }
}

fn agent(path: Vec<[f64; 2]>, start_s: f64, profile: &[[f64; 2]], behavior: Behavior) -> AgentScript {
    AgentScript {
        path,
        start_s,
        speed_profile: profile.to_vec(),
        half_extents: [2.25, 1.0],
        behavior,
    }
}

fn spec(id: &str, category: Category, route: Vec<[f64; 2]>, time_limit: f64) -> ScenarioSpec {
    let first = route[0];
    let second = route[1];
    ScenarioSpec {
        id: id.into(),
        category,
        ego_start: StartPose {
            x: first[0],
            y: first[1],
            heading: (second[1] - first[1]).atan2(second[0] - first[0]),
        },
        route,
        lane_width: LANE,
        lanes_left: 0,
        lanes_right: 0,
        agents: vec![],
        controls: vec![],
        time_limit,
    }
}

fn light(s: f64, red_from: f64, red_until: f64) -> TrafficControl {
    TrafficControl {
        kind: ControlKind::TrafficLight,
        s,
        length: 4.0,
        red_from,
        red_until,
    }
}

fn stop_sign(s: f64) -> TrafficControl {
    TrafficControl {
        kind: ControlKind::StopSign,
        s,
        length: 4.0,
        red_from: 0.0,
        red_until: 0.0,
    }
}

/// The starter pack, ordered by category.
pub fn starter_scenarios() -> Vec<ScenarioSpec> {
    let mut out = Vec::new();

    // Merging: a ramp vehicle joins ahead of the ego.
    let mut s = spec(
        "merge_ramp",
        Category::Merging,
        Path::start(0.0, 0.0, 0.0).straight(140.0).done(),
        45.0,
    );
    s.agents.push(agent(
        Path::start(20.0, -24.0, 0.5).to(62.0, 0.0).straight(200.0).done(),
        0.0,
        &[[0.0, 5.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "merge_cut_in",
        Category::Merging,
        Path::start(0.0, 0.0, 0.0).straight(130.0).done(),
        45.0,
    );
    s.lanes_left = 1;
    s.agents.push(agent(
        Path::start(18.0, LANE, 0.0).straight(22.0).to(60.0, 0.0).straight(200.0).done(),
        0.0,
        &[[0.0, 4.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "merge_curve",
        Category::Merging,
        Path::start(0.0, 0.0, 0.0).straight(40.0).arc(40.0, 0.6).straight(60.0).done(),
        50.0,
    );
    s.agents.push(agent(
        Path::start(30.0, -30.0, FRAC_PI_2 * 0.8).to(58.0, 3.0).arc(40.0, 0.45).straight(200.0).done(),
        0.0,
        &[[0.0, 4.5]],
        Behavior::Scripted,
    ));
    out.push(s);

    // Overtaking: pass a stopped or slow vehicle in the ego lane.
    let mut s = spec(
        "overtake_parked",
        Category::Overtaking,
        Path::start(0.0, 0.0, 0.0).straight(140.0).done(),
        45.0,
    );
    s.lanes_left = 1;
    s.agents.push(agent(
        Path::start(45.0, 0.0, 0.0).straight(20.0).done(),
        0.0,
        &[[0.0, 0.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "overtake_slow",
        Category::Overtaking,
        Path::start(0.0, 0.0, 0.0).straight(160.0).done(),
        50.0,
    );
    s.lanes_left = 1;
    s.agents.push(agent(
        Path::start(30.0, 0.0, 0.0).straight(300.0).done(),
        0.0,
        &[[0.0, 1.5]],
        Behavior::Scripted,
    ));
    s.agents.push(agent(
        Path::start(130.0, LANE, 0.0).straight(20.0).done(),
        0.0,
        &[[0.0, 0.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "overtake_right",
        Category::Overtaking,
        Path::start(0.0, 0.0, 0.0).straight(50.0).arc(60.0, -0.5).straight(60.0).done(),
        50.0,
    );
    s.lanes_right = 1;
    s.agents.push(agent(
        Path::start(40.0, 0.0, 0.0).straight(10.0).arc(60.0, -0.5).straight(100.0).done(),
        0.0,
        &[[0.0, 1.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    // Emergency brake: the lead vehicle brakes hard, or an obstacle crosses.
    let mut s = spec(
        "brake_lead",
        Category::EmergencyBrake,
        Path::start(0.0, 0.0, 0.0).straight(150.0).done(),
        50.0,
    );
    s.agents.push(agent(
        Path::start(0.0, 0.0, 0.0).straight(300.0).done(),
        22.0,
        &[[0.0, 3.0], [3.0, 5.0], [9.0, 5.0], [10.0, 0.0], [16.0, 0.0], [19.0, 5.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "brake_crossing",
        Category::EmergencyBrake,
        Path::start(0.0, 0.0, 0.0).straight(120.0).done(),
        45.0,
    );
    let mut ped = agent(
        Path::start(55.0, -9.0, FRAC_PI_2).straight(25.0).done(),
        0.0,
        &[[0.0, 0.0], [8.0, 0.0], [8.5, 1.4]],
        Behavior::Scripted,
    );
    ped.half_extents = [0.4, 0.4];
    s.agents.push(ped);
    out.push(s);

    let mut s = spec(
        "brake_curve_lead",
        Category::EmergencyBrake,
        Path::start(0.0, 0.0, 0.0).straight(30.0).arc(30.0, 0.8).straight(70.0).done(),
        50.0,
    );
    s.agents.push(agent(
        Path::start(0.0, 0.0, 0.0).straight(30.0).arc(30.0, 0.8).straight(200.0).done(),
        20.0,
        &[[0.0, 4.0], [11.0, 4.0], [12.0, 0.0], [17.0, 0.0], [20.0, 4.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    // Give way: crossing or oncoming traffic at an intersection.
    let mut s = spec(
        "giveway_crossing",
        Category::GiveWay,
        Path::start(0.0, 0.0, 0.0).straight(120.0).done(),
        45.0,
    );
    s.agents.push(agent(
        Path::start(60.0, -70.0, FRAC_PI_2).straight(160.0).done(),
        0.0,
        &[[0.0, 6.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "giveway_left_turn",
        Category::GiveWay,
        Path::start(0.0, 0.0, 0.0).straight(44.0).arc(8.0, FRAC_PI_2).straight(50.0).done(),
        45.0,
    );
    s.agents.push(agent(
        Path::start(120.0, LANE, std::f64::consts::PI).straight(250.0).done(),
        0.0,
        &[[0.0, 7.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    let mut s = spec(
        "giveway_right_turn",
        Category::GiveWay,
        Path::start(0.0, 0.0, 0.0).straight(40.0).arc(8.0, -FRAC_PI_2).straight(50.0).done(),
        45.0,
    );
    s.agents.push(agent(
        Path::start(-60.0, -8.0 - LANE, 0.0).straight(250.0).done(),
        0.0,
        &[[0.0, 0.0], [2.0, 0.0], [4.0, 7.0]],
        Behavior::Scripted,
    ));
    out.push(s);

    // Traffic signs: red lights and stop signs.
    let mut s = spec(
        "sign_red_light",
        Category::TrafficSign,
        Path::start(0.0, 0.0, 0.0).straight(110.0).done(),
        45.0,
    );
    s.controls.push(light(45.0, 0.0, 16.0));
    out.push(s);

    let mut s = spec(
        "sign_stop",
        Category::TrafficSign,
        Path::start(0.0, 0.0, 0.0).straight(100.0).done(),
        45.0,
    );
    s.controls.push(stop_sign(40.0));
    out.push(s);

    let mut s = spec(
        "sign_late_red",
        Category::TrafficSign,
        Path::start(0.0, 0.0, 0.0).straight(120.0).done(),
        45.0,
    );
    s.controls.push(light(60.0, 10.0, 20.0));
    out.push(s);

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn pack_is_valid_and_covers_categories() {
        let pack = starter_scenarios();
        assert!(pack.len() >= 10);
        let mut per: BTreeMap<Category, usize> = BTreeMap::new();
        for s in &pack {
            s.validate().unwrap();
            *per.entry(s.category).or_default() += 1;
        }
        assert_eq!(per.len(), 5);
        assert!(per.values().all(|n| *n >= 2));
    }

    #[test]
    fn arc_builder_radius() {
        let pts = Path::start(0.0, 0.0, 0.0).arc(8.0, FRAC_PI_2).done();
        let end = Vec2::from(*pts.last().unwrap());
        assert!((end.x - 8.0).abs() < 1e-9 && (end.y - 8.0).abs() < 1e-9);
    }
}
