//! Greedy closed-loop evaluation of a policy checkpoint on the starter pack.
//!
//! Usage: `cargo run --release --example evaluate_policy -- <policy.ckpt> [decoder.ckpt] [report.json]`
//! Without a decoder checkpoint the procedural primitives produce the trajectories.

use decision_drive::action::{ActionSource, DecoderShape};
use decision_drive::eval::evaluate;
use decision_drive::io::{load_decoder, load_policy};
use decision_drive::policy::PolicyShape;
use decision_drive::sim::starter::starter_scenarios;
use std::path::Path;
use std::sync::Arc;

fn main() -> decision_drive::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(policy_path) = args.first() else {
        eprintln!("usage: evaluate_policy <policy.ckpt> [decoder.ckpt] [report.json]");
        std::process::exit(1);
    };
    let policy = load_policy(Path::new(policy_path), PolicyShape::default())?;
    let source = match args.get(1) {
        Some(p) => ActionSource::Decoder(Arc::new(load_decoder(Path::new(p), DecoderShape::default())?)),
        None => ActionSource::Oracle,
    };
    let report = evaluate(&policy, &source, &starter_scenarios(), 0, 8)?;

    for r in &report.routes {
        println!(
            "{:<20} {:<3} DS {:>6.2}  completion {:.3}  {:>5.1}s  {:?}",
            r.scenario_id,
            r.category.short(),
            r.driving_score,
            r.route_completion,
            r.duration,
            r.infractions
        );
    }
    println!("DS {:.2}  SR {:.2}%  mean ability {:.2}", report.ds, report.sr, report.mean_ability);
    for (cat, v) in &report.ability {
        println!("  {cat:<16} {v:>6.2}");
    }
    if let Some(out) = args.get(2) {
        decision_drive::io::write_file(Path::new(out), report.to_json().as_bytes())?;
        println!("wrote {out}");
    }
    Ok(())
}
