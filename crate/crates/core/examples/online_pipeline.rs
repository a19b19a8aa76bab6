//! Full two-stage run on the starter pack: imitation, failed-route pre-pass, alternating
//! rollout collection and PPO training, then greedy evaluation before and after.
//!
//! Usage: `cargo run --release --example online_pipeline -- [seed] [checkpoint_dir] [episodes_per_route] [learning_rate]`
//! When `checkpoint_dir` holds `il_policy.ckpt`/`il_decoder.ckpt`, imitation is skipped.

use decision_drive::action::{ActionSource, DecoderParams, DecoderShape};
use decision_drive::eval::evaluate;
use decision_drive::il::{generate_dataset, train_il, ILConfig};
use decision_drive::io::{load_decoder, load_policy, save_decoder, save_policy};
use decision_drive::policy::{PolicyParams, PolicyShape};
use decision_drive::rl::{online_rl, TrainerConfig};
use decision_drive::sim::starter::starter_scenarios;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "target/pipeline".into()));
    let defaults = TrainerConfig::default();
    let episodes = args.next().and_then(|a| a.parse().ok()).unwrap_or(defaults.episodes_per_route);
    let lr = args.next().and_then(|a| a.parse().ok()).unwrap_or(defaults.learning_rate);
    let start = Instant::now();
    let scenarios = starter_scenarios();

    let (policy_path, decoder_path) = (dir.join("il_policy.ckpt"), dir.join("il_decoder.ckpt"));
    let (policy, decoder) = if policy_path.exists() && decoder_path.exists() {
        (
            load_policy(&policy_path, PolicyShape::default())?,
            load_decoder(&decoder_path, DecoderShape::default())?,
        )
    } else {
        let data = generate_dataset(&scenarios, 400, 0)?;
        let out = train_il(
            &data,
            PolicyParams::new(PolicyShape::default(), 1),
            DecoderParams::new(DecoderShape::default(), 2),
            &ILConfig::default(),
        )?;
        println!(
            "imitation: accuracy {:.3}, L1 {:.3} m ({:.0}s)",
            out.metrics.heldout_accuracy.unwrap_or(f64::NAN),
            out.metrics.heldout_l1.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
        save_policy(&policy_path, &out.policy)?;
        save_decoder(&decoder_path, &out.decoder)?;
        (out.policy, out.decoder)
    };

    let source = ActionSource::Decoder(Arc::new(decoder));
    let cfg = TrainerConfig {
        seed,
        episodes_per_route: episodes,
        learning_rate: lr,
        ..defaults
    };
    let before = evaluate(&policy, &source, &scenarios, seed, cfg.workers)?;
    let out = online_rl(&policy, &policy, &source, &scenarios, &cfg, |m| {
        println!(
            "round {} epoch {}: ppo {:+.4} value {:.4} kl {:.5} clip {:.3}",
            m.round, m.epoch, m.ppo, m.value, m.kl, m.clip_fraction
        )
    })?;
    for r in &out.rounds {
        println!(
            "round {}: {} episodes, rollout success {:.2}",
            r.round, r.episodes, r.rollout_success_rate
        );
    }
    let after = evaluate(&out.policy, &source, &scenarios, seed, cfg.workers)?;
    let (before, after) = (before.with_split(&out.selected), after.with_split(&out.selected));
    println!("selected routes: {:?}", out.selected);
    for (b, a) in before.routes.iter().zip(&after.routes) {
        println!(
            "{:<20} IL {:>6.2} {:<5} {:?} {:.1}s  RL {:>6.2} {:<5} {:?} {:.1}s",
            b.scenario_id,
            b.driving_score,
            b.success,
            b.infractions,
            b.duration,
            a.driving_score,
            a.success,
            a.infractions,
            a.duration
        );
    }
    let (sb, sa) = (before.split.unwrap(), after.split.unwrap());
    println!("IL: DS {:.2} SR {:.2} | rollout SR {:.2}", before.ds, before.sr, sb.rollout.sr);
    println!("RL: DS {:.2} SR {:.2} | rollout SR {:.2}", after.ds, after.sr, sa.rollout.sr);
    println!("elapsed {:.0}s", start.elapsed().as_secs_f64());
    Ok(())
}
