//! Runs one scenario with a scripted constant-speed drive and reports the penalty events.
//!
//! Usage: `cargo run --release --example simulate_scenario -- <starter_id | file.toml> [speed] [trace.jsonl]`
//!
//! At 8 m/s straight through `sign_red_light` the ego runs the light; at 0 m/s it times out.

use decision_drive::sim::starter::starter_scenarios;
use decision_drive::sim::{
    constant_speed_trajectory, load_scenario, step, write_trace, ScenarioSpec, TraceRecord, DECISION_INTERVAL,
};
use std::path::Path;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "sign_red_light".into());
    let speed: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(8.0);
    let trace_path = args.next();

    let spec = if which.ends_with(".toml") {
        ScenarioSpec::load(Path::new(&which))?
    } else {
        starter_scenarios()
            .into_iter()
            .find(|s| s.id == which)
            .ok_or_else(|| decision_drive::Error::Argument(format!("no starter scenario `{which}`")))?
    };
    println!(
        "{} ({}): route {:.0} m, {} agents, {} controls, limit {:.0} s",
        spec.id,
        spec.category,
        spec.route_polyline().map_or(0.0, |p| p.length()),
        spec.agents.len(),
        spec.controls.len(),
        spec.time_limit
    );

    let traj = constant_speed_trajectory(speed);
    let mut world = load_scenario(&spec, 0)?;
    let mut trace = vec![TraceRecord::from_world(&world, &[])];
    let outcome = loop {
        let r = step(&world, &traj, DECISION_INTERVAL)?;
        trace.push(TraceRecord::from_world(&r.world, &r.events));
        if r.done {
            break r;
        }
        world = r.world;
    };
    println!(
        "finished at t={:.1} s, progress {:.3}, reward {:+}, destination {}, timed out {}",
        outcome.world.t, outcome.world.progress, outcome.reward, outcome.reached_destination, outcome.timed_out
    );
    for e in &outcome.events {
        println!("  penalty {:?} at t={:.2} s", e.kind, e.t);
    }
    if let Some(p) = trace_path {
        let file = std::fs::File::create(&p).map_err(|e| decision_drive::Error::io(&p, e))?;
        write_trace(std::io::BufWriter::new(file), &trace).map_err(|e| decision_drive::Error::io(&p, e))?;
        println!("wrote {} trace records to {p}", trace.len());
    }
    Ok(())
}
