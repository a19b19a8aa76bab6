//! Prints a greedy closed-loop trace of a stored policy on one starter scenario.
//!
//! Usage: `cargo run --release --example trace_policy -- <scenario_id> <checkpoint_dir>`

use decision_drive::action::{best_feasible, path_feasibility, ActionSource, DecoderShape};
use decision_drive::encoder::encode;
use decision_drive::il::expert_label;
use decision_drive::io::{load_decoder, load_policy};
use decision_drive::policy::{forward, PolicyShape};
use decision_drive::sim::{load_scenario, starter::starter_scenarios, step, DECISION_INTERVAL};
use std::path::PathBuf;
use std::sync::Arc;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let id = args.next().expect("scenario id");
    let dir = PathBuf::from(args.next().expect("checkpoint dir"));
    let policy = load_policy(&dir.join("il_policy.ckpt"), PolicyShape::default())?;
    let source = ActionSource::Decoder(Arc::new(load_decoder(
        &dir.join("il_decoder.ckpt"),
        DecoderShape::default(),
    )?));
    let spec = starter_scenarios()
        .into_iter()
        .find(|s| s.id == id)
        .expect("known scenario");
    let mut world = load_scenario(&spec, 0)?;
    loop {
        let emb = encode(&world);
        let (dist, value) = forward(&emb, &policy)?;
        let a = best_feasible(&dist, &path_feasibility(&world)).expect("feasible");
        let traj = source.trajectory(&world, &emb, a)?;
        let r = step(&world, &traj, DECISION_INTERVAL)?;
        println!(
            "t={:5.1} x={:7.2} y={:6.2} v={:4.2} V={:+.2} p={:.2} {} | expert {}",
            world.t,
            world.ego.pose.x,
            world.ego.pose.y,
            world.ego.speed,
            value,
            dist.prob(a),
            a,
            expert_label(&world)
        );
        if r.done {
            println!("reward {} events {:?}", r.reward, r.events);
            break;
        }
        world = r.world;
    }
    Ok(())
}
