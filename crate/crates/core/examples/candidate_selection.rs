//! Builds the 42 candidate trajectories for a scenario's opening state and picks the one
//! with the highest joint probability among the feasible entries.
//!
//! Usage: `cargo run --release --example candidate_selection -- [scenario_id] [policy_seed]`

use decision_drive::action::{candidate_set, select_optimal, ActionSource};
use decision_drive::encoder::encode;
use decision_drive::policy::{forward, PolicyParams, PolicyShape};
use decision_drive::sim::load_scenario;
use decision_drive::sim::starter::starter_scenarios;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "overtake_parked".into());
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let spec = starter_scenarios()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| decision_drive::Error::Argument(format!("no starter scenario `{id}`")))?;
    let world = load_scenario(&spec, 0)?;

    let policy = PolicyParams::new(PolicyShape::default(), seed);
    let (dist, value) = forward(&encode(&world), &policy)?;
    let cands = candidate_set(&world, &ActionSource::Oracle)?;

    let mut ranked: Vec<_> = cands.entries.iter().map(|c| (dist.prob(c.action), c)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("value estimate {value:+.4}, entropy {:.3} nats", dist.entropy());
    println!("{:>8}  {:<8}  action", "p", "feasible");
    for (p, c) in ranked.iter().take(8) {
        println!("{p:>8.5}  {:<8}  {}", c.feasible, c.action);
    }

    let (action, traj) = select_optimal(&cands, &dist)?;
    println!("selected {action}");
    let end = traj.path.last().expect("20 path points");
    println!(
        "  path ends at ({:.2}, {:.2}) in the ego frame, speed waypoints {:?}",
        end.x,
        end.y,
        traj.speed.iter().map(|p| format!("{:.2}", p.x)).collect::<Vec<_>>()
    );
    Ok(())
}
