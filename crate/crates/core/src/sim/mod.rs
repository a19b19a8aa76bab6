//! Deterministic closed-loop 2D driving simulator.

mod penalties;
pub mod scenario;
pub mod starter;
pub mod vehicle;
mod world;

pub use penalties::{detect_penalties, MAX_ROUTE_DEVIATION, STOP_SPEED_THRESHOLD};
pub use scenario::{
    AgentScript, Behavior, Category, ControlKind, ScenarioSpec, StartPose, TrafficControl,
};
pub use world::{
    AgentState, ControlState, ControlStatus, EgoState, PenaltyEvent, PenaltyKind, PenaltySet,
    Scenario, WorldState, EGO_HALF_EXTENTS,
};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2};
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;
use vehicle::{integrate, Tracker, SUBSTEP};
use world::control_status;

/// Interval between policy queries (s).
pub const DECISION_INTERVAL: f64 = 0.5;
/// Distance from the route end at which the destination counts as reached (m).
pub const DESTINATION_TOLERANCE: f64 = 1.0;

const AGENT_MAX_ACCEL: f64 = 3.0;
const AGENT_MAX_DECEL: f64 = 6.0;
/// Reactive agents brake when the ego is within this gap ahead of their front bumper (m).
const REACTIVE_GAP: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct StepResult {
    pub world: WorldState,
    /// Enabled penalty events; nonempty terminates the episode.
    pub events: Vec<PenaltyEvent>,
    /// Penalties observed during the step whose kind is masked out of the reward.
    pub masked_events: Vec<PenaltyEvent>,
    pub reached_destination: bool,
    pub timed_out: bool,
    pub done: bool,
    pub reward: i32,
}

/// Places the ego at the scenario start with zero speed and agents at their initial poses.
pub fn load_scenario(spec: &ScenarioSpec, seed: u64) -> Result<WorldState> {
    let scenario = Arc::new(Scenario::new(spec.clone())?);
    Ok(initial_world(scenario, seed))
}

/// Like [`load_scenario`] but reuses an already validated scenario.
pub fn initial_world(scenario: Arc<Scenario>, seed: u64) -> WorldState {
    let spec = &scenario.spec;
    let agents = spec
        .agents
        .iter()
        .zip(&scenario.agent_paths)
        .map(|(a, path)| AgentState {
            pose: Pose::new(
                path.point_at(a.start_s).x,
                path.point_at(a.start_s).y,
                path.heading_at(a.start_s),
            ),
            speed: a.speed_at(0.0),
            half_extents: a.half_extents,
            s: a.start_s,
        })
        .collect();
    let controls = spec
        .controls
        .iter()
        .map(|c| {
            let p = scenario.route.point_at(c.s);
            ControlState {
                status: control_status(c.kind, c.is_red(0.0)),
                pose: Pose::new(p.x, p.y, scenario.route.heading_at(c.s)),
                s_start: c.s,
                s_end: c.s + c.length,
                ego_inside: false,
                min_speed_inside: None,
            }
        })
        .collect();
    let StartPose { x, y, heading } = spec.ego_start;
    let mut world = WorldState {
        scenario_id: spec.id.clone(),
        seed,
        ego: EgoState {
            pose: Pose::new(x, y, crate::geometry::wrap_angle(heading)),
            speed: 0.0,
        },
        agents,
        controls,
        t: 0.0,
        step_index: 0,
        progress: 0.0,
        finished: false,
        penalties: PenaltySet::all(),
        scenario,
    };
    update_trackers(&mut world);
    world.progress = raw_progress(&world);
    world
}

/// Completion of the route: running maximum of the ego's arc-length projection over route length.
pub fn route_progress(world: &WorldState) -> f64 {
    world.progress
}

fn raw_progress(world: &WorldState) -> f64 {
    (world.ego_projection().s / world.route().length()).clamp(0.0, 1.0)
}

/// Advances the world by `dt` seconds while tracking `traj` (given in the ego frame at call time).
pub fn step(world: &WorldState, traj: &Trajectory, dt: f64) -> Result<StepResult> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    traj.validate()?;
    if world.finished {
        return Err(Error::Argument("episode has already finished".into()));
    }

    let mut w = world.clone();
    let tracker = Tracker::new(&w.ego.pose, traj);
    let substeps = (dt / SUBSTEP - 1e-9).ceil().max(1.0) as usize;
    let route_len = w.route().length();
    let mut elapsed = 0.0;
    let mut events = Vec::new();
    let mut masked: Vec<PenaltyEvent> = Vec::new();
    let mut reached = false;
    let mut timed_out = false;

    for k in 0..substeps {
        let h = if k + 1 == substeps {
            dt - SUBSTEP * k as f64
        } else {
            SUBSTEP
        };
        let (accel, steer) = tracker.command(&w.ego, elapsed);
        integrate(&mut w.ego, accel, steer, h);
        advance_agents(&mut w, h);
        elapsed += h;
        w.t += h;
        for (c, spec) in w.controls.iter_mut().zip(&w.scenario.spec.controls) {
            c.status = control_status(spec.kind, spec.is_red(w.t));
        }

        for e in detect_penalties(&w) {
            if w.penalties.contains(e.kind) {
                events.push(e);
            } else if !masked.iter().any(|m| m.kind == e.kind) {
                masked.push(e);
            }
        }
        update_trackers(&mut w);
        w.progress = w.progress.max(raw_progress(&w));
        reached = w.ego_projection().s >= route_len - DESTINATION_TOLERANCE;
        timed_out = !reached && w.t >= w.time_limit() - 1e-9;
        if !events.is_empty() || reached || timed_out {
            break;
        }
    }

    w.check_valid()?;
    w.step_index += 1;
    let done = reached || timed_out || !events.is_empty();
    let reward = if !events.is_empty() {
        -1
    } else if reached {
        w.progress = 1.0;
        1
    } else {
        0
    };
    w.finished = done;
    Ok(StepResult {
        world: w,
        events,
        masked_events: masked,
        reached_destination: reached,
        timed_out,
        done,
        reward,
    })
}

fn advance_agents(w: &mut WorldState, h: f64) {
    let ego = w.ego;
    let t = w.t;
    let scenario = Arc::clone(&w.scenario);
    for ((agent, script), path) in w
        .agents
        .iter_mut()
        .zip(&scenario.spec.agents)
        .zip(&scenario.agent_paths)
    {
        let mut target = script.speed_at(t);
        if script.behavior == Behavior::Reactive {
            let rel = agent.pose.to_local(ego.pose.position());
            let front = agent.half_extents[0] + EGO_HALF_EXTENTS[0];
            if rel.x > 0.0 && rel.x < front + REACTIVE_GAP && rel.y.abs() < 2.2 {
                target = 0.0;
            }
        }
        let v0 = agent.speed;
        let v1 = (v0 + (target - v0).clamp(-AGENT_MAX_DECEL * h, AGENT_MAX_ACCEL * h)).max(0.0);
        agent.s += 0.5 * (v0 + v1) * h;
        agent.speed = v1;
        let p = path.point_at(agent.s);
        agent.pose = Pose::new(p.x, p.y, path.heading_at(agent.s));
    }
}

fn update_trackers(w: &mut WorldState) {
    let proj = w.ego_projection();
    let speed = w.ego.speed;
    let inside: Vec<bool> = w.controls.iter().map(|c| w.ego_in_region(c, &proj)).collect();
    for (c, now) in w.controls.iter_mut().zip(inside) {
        c.min_speed_inside = if now {
            Some(c.min_speed_inside.map_or(speed, |m| m.min(speed)))
        } else {
            None
        };
        c.ego_inside = now;
    }
}

/// One line of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub events: Vec<PenaltyKind>,
}

impl TraceRecord {
    pub fn from_world(world: &WorldState, events: &[PenaltyEvent]) -> Self {
        TraceRecord {
            t: world.t,
            x: world.ego.pose.x,
            y: world.ego.pose.y,
            heading: world.ego.pose.heading,
            speed: world.ego.speed,
            events: events.iter().map(|e| e.kind).collect(),
        }
    }
}

/// Writes trace records as line-delimited JSON.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Ego-frame straight-line trajectory at constant speed, handy for scripted drives.
pub fn constant_speed_trajectory(speed: f64) -> Trajectory {
    use crate::trajectory::{PATH_POINTS, SPEED_INTERVAL, SPEED_POINTS};
    Trajectory {
        path: (1..=PATH_POINTS).map(|i| Vec2::new(i as f64, 0.0)).collect(),
        speed: (1..=SPEED_POINTS)
            .map(|i| Vec2::new(speed * SPEED_INTERVAL * i as f64, 0.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            id: "unit".into(),
            category: Category::TrafficSign,
            route: vec![[0.0, 0.0], [100.0, 0.0]],
            lane_width: 3.5,
            lanes_left: 1,
            lanes_right: 0,
            agents: vec![],
            controls: vec![],
            time_limit: 60.0,
            ego_start: StartPose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
        }
    }

    fn with_speed(mut w: WorldState, v: f64) -> WorldState {
        w.ego.speed = v;
        w
    }

    #[test]
    fn load_places_ego_at_start() {
        let w = load_scenario(&spec(), 7).unwrap();
        assert_eq!(w.ego.pose, Pose::new(0.0, 0.0, 0.0));
        assert_eq!(w.ego.speed, 0.0);
        assert_eq!(w.t, 0.0);
        assert_eq!(route_progress(&w), 0.0);
        let again = load_scenario(&spec(), 7).unwrap();
        assert_eq!(w.to_json(), again.to_json());
    }

    #[test]
    fn load_rejects_one_point_route() {
        let mut s = spec();
        s.route.truncate(1);
        let err = load_scenario(&s, 7).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "route"));
    }

    #[test]
    fn stop_trajectory_is_a_fixed_point() {
        let w = load_scenario(&spec(), 1).unwrap();
        let r = step(&w, &constant_speed_trajectory(0.0), 0.5).unwrap();
        assert!(r.world.ego.pose.position().dist(w.ego.pose.position()) < 1e-9);
        assert!((r.world.ego.pose.heading - w.ego.pose.heading).abs() < 1e-9);
        assert!(!r.done);
        assert_eq!(r.reward, 0);
    }

    #[test]
    fn constant_speed_advance() {
        let w = with_speed(load_scenario(&spec(), 1).unwrap(), 5.0);
        let r = step(&w, &constant_speed_trajectory(5.0), 0.5).unwrap();
        assert!((r.world.ego.pose.x - 2.5).abs() < 0.1);
        assert!(r.world.ego.pose.y.abs() < 1e-9);
        assert!((r.world.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reaching_destination_rewards_plus_one() {
        let mut w = with_speed(load_scenario(&spec(), 1).unwrap(), 6.0);
        w.ego.pose.x = 97.5;
        let r = step(&w, &constant_speed_trajectory(6.0), 0.5).unwrap();
        assert!(r.reached_destination && r.done);
        assert_eq!(r.reward, 1);
        assert_eq!(route_progress(&r.world), 1.0);
        assert!(matches!(
            step(&r.world, &constant_speed_trajectory(6.0), 0.5),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn timeout_gives_zero_reward() {
        let mut s = spec();
        s.time_limit = 1.0;
        let mut w = load_scenario(&s, 0).unwrap();
        let traj = constant_speed_trajectory(0.0);
        loop {
            let r = step(&w, &traj, 0.5).unwrap();
            if r.done {
                assert!(r.timed_out);
                assert_eq!(r.reward, 0);
                break;
            }
            w = r.world;
        }
    }

    #[test]
    fn argument_errors() {
        let w = load_scenario(&spec(), 0).unwrap();
        let traj = constant_speed_trajectory(1.0);
        assert!(matches!(step(&w, &traj, 0.0), Err(Error::Argument(_))));
        assert!(matches!(step(&w, &traj, -1.0), Err(Error::Argument(_))));
        let mut bad = traj.clone();
        bad.path[3].y = f64::INFINITY;
        assert!(matches!(step(&w, &bad, 0.5), Err(Error::NumericInput(_))));
    }

    #[test]
    fn progress_examples() {
        let mut w = load_scenario(&spec(), 0).unwrap();
        w.ego.pose.x = 40.0;
        assert!((raw_progress(&w) - 0.4).abs() < 1e-12);
        w.ego.pose.x = 100.0;
        assert_eq!(raw_progress(&w), 1.0);
    }

    #[test]
    fn masked_penalties_do_not_terminate() {
        let mut s = spec();
        s.lanes_left = 0;
        let mut w = with_speed(load_scenario(&s, 0).unwrap(), 5.0);
        w.penalties = PenaltySet::from_kinds(&[PenaltyKind::Collision]);
        w.ego.pose.y = 1.6;
        w.ego.pose.heading = 0.6;
        let r = step(&w, &constant_speed_trajectory(5.0), 0.5).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.masked_events[0].kind, PenaltyKind::RouteDeviation);
        assert!(!r.done);
    }
}
