//! Generates an expert dataset from the starter pack and trains the decision heads and the
//! trajectory decoder, printing per-epoch losses and held-out metrics.
//!
//! Usage: `cargo run --release --example imitation_training -- [steps_per_scenario] [epochs]`

use decision_drive::action::{DecoderParams, DecoderShape};
use decision_drive::il::{generate_dataset, train_il_with, ILConfig};
use decision_drive::policy::{forward, PolicyParams, PolicyShape};
use decision_drive::sim::starter::starter_scenarios;
use std::collections::BTreeMap;
use std::time::Instant;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(400);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);

    let start = Instant::now();
    let scenarios = starter_scenarios();
    let data = generate_dataset(&scenarios, steps, 0)?;
    println!(
        "dataset: {} records from {} scenarios ({:.1}s)",
        data.len(),
        scenarios.len(),
        start.elapsed().as_secs_f64()
    );

    let cfg = ILConfig {
        epochs,
        ..ILConfig::default()
    };
    let out = train_il_with(
        &data,
        PolicyParams::new(PolicyShape::default(), 1),
        DecoderParams::new(DecoderShape::default(), 2),
        &cfg,
        |m| {
            println!(
                "epoch {:>3}  ce {:.4}  bc {:.4}  kl {:.3}  total {:.4}  ({:.0}s)",
                m.epoch,
                m.ce,
                m.bc,
                m.vae,
                m.total,
                start.elapsed().as_secs_f64()
            )
        },
    )?;
    let m = &out.metrics;
    println!(
        "held-out ({} records): accuracy {:.3}, decoder L1 {:.3} m",
        m.heldout_records,
        m.heldout_accuracy.unwrap_or(f64::NAN),
        m.heldout_l1.unwrap_or(f64::NAN)
    );
    println!("reference snapshot {}", m.reference_hash);

    // Recall per expert label over the whole dataset, to spot under-fitted rare decisions.
    let mut recall: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &data {
        let (dist, _) = forward(&r.emb, &out.policy)?;
        let e = recall.entry(r.label.to_string()).or_default();
        e.1 += 1;
        if dist.argmax() == r.label {
            e.0 += 1;
        }
    }
    for (label, (ok, n)) in recall {
        println!("{label:<40} {ok:>5}/{n:<5} {:.2}", ok as f64 / n as f64);
    }
    Ok(())
}
