//! Samples one episode with an untrained policy and prints the TD residuals and GAE
//! advantages, checking the Monte-Carlo identity that holds for λ = 1.
//!
//! Usage: `cargo run --release --example advantage_estimation -- [scenario_id] [lambda]`

use decision_drive::action::ActionSource;
use decision_drive::policy::{PolicyParams, PolicyShape};
use decision_drive::rl::{advantages, run_sampled_episode};
use decision_drive::sim::starter::starter_scenarios;
use decision_drive::sim::{PenaltySet, Scenario};
use std::sync::Arc;

const GAMMA: f64 = 0.99;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "merge_ramp".into());
    let lambda: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let spec = starter_scenarios()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| decision_drive::Error::Argument(format!("no starter scenario `{id}`")))?;

    let policy = PolicyParams::new(PolicyShape::default(), 0);
    let episode = run_sampled_episode(
        Arc::new(Scenario::new(spec)?),
        &policy,
        &ActionSource::Oracle,
        PenaltySet::all(),
        0,
        42,
        0,
    )?;
    let est = advantages(&episode, GAMMA, lambda);
    println!(
        "{}: {} steps, success {}, penalties {:?}, truncated {}",
        id,
        episode.transitions.len(),
        episode.success,
        episode.terminal_penalties,
        episode.truncated
    );
    println!("{:>4} {:>7} {:>8} {:>9} {:>9}  action", "t", "reward", "V(s)", "delta", "gae");
    for (i, t) in episode.transitions.iter().enumerate() {
        println!(
            "{:>4} {:>+7} {:>8.4} {:>9.4} {:>9.4}  {}",
            i, t.reward, t.value, est.delta[i], est.gae[i], t.action
        );
    }

    if lambda == 1.0 && !episode.truncated {
        // With λ = 1 and no bootstrap, advantage + value is the discounted return.
        let rewards: Vec<f64> = episode.transitions.iter().map(|t| t.reward as f64).collect();
        let worst = (0..rewards.len())
            .map(|t| {
                let ret: f64 = rewards[t..].iter().enumerate().map(|(k, r)| GAMMA.powi(k as i32) * r).sum();
                (est.return_target[t] - ret).abs()
            })
            .fold(0.0, f64::max);
        println!("max |gae + V - discounted return| = {worst:.2e}");
    }
    Ok(())
}
