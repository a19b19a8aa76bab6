//! Drives every starter scenario with the rule-based expert and prints the outcome.
//!
//! Usage: `cargo run --release --example drive_expert -- [-v] [decoder_checkpoint]`
//! With a decoder checkpoint, the expert's meta-actions are executed through the learned
//! decoder instead of the procedural primitives.

use decision_drive::action::{ActionSource, DecoderShape};
use decision_drive::encoder::encode;
use decision_drive::il::expert_label;
use decision_drive::io::load_decoder;
use decision_drive::sim::{load_scenario, starter::starter_scenarios, step, DECISION_INTERVAL};
use std::path::Path;
use std::sync::Arc;

fn main() -> decision_drive::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let verbose = args.iter().any(|a| a == "-v");
    let source = match args.iter().find(|a| *a != "-v") {
        Some(p) => ActionSource::Decoder(Arc::new(load_decoder(Path::new(p), DecoderShape::default())?)),
        None => ActionSource::Oracle,
    };
    for spec in starter_scenarios() {
        let mut world = load_scenario(&spec, 0)?;
        loop {
            let label = expert_label(&world);
            let traj = source.trajectory(&world, &encode(&world), label)?;
            let r = step(&world, &traj, DECISION_INTERVAL)?;
            if verbose {
                println!(
                    "  t={:5.1} x={:7.2} y={:6.2} v={:4.2} {}",
                    world.t, world.ego.pose.x, world.ego.pose.y, world.ego.speed, label
                );
            }
            if r.done {
                println!(
                    "{:<20} reward={:+} t={:5.1} progress={:.3} events={:?}",
                    spec.id,
                    r.reward,
                    r.world.t,
                    r.world.progress,
                    r.events.iter().map(|e| e.kind).collect::<Vec<_>>()
                );
                break;
            }
            world = r.world;
        }
    }
    Ok(())
}
