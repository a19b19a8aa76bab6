//! Runs one ablation table from an imitation checkpoint directory.
//!
//! Usage: `cargo run --release --example ablation_study -- <checkpoint_dir> [penalties|rounds|regularization]`
//! The directory must hold `il_policy.ckpt` and `il_decoder.ckpt`, for instance from the
//! `online_pipeline` example or `decision-drive il train`.

use decision_drive::action::{ActionSource, DecoderShape};
use decision_drive::eval::ablation::{ablate_penalties, ablate_regularization, ablate_rounds, AblationInputs, DEFAULT_ROUNDS};
use decision_drive::io::{load_decoder, load_policy};
use decision_drive::policy::PolicyShape;
use decision_drive::rl::TrainerConfig;
use decision_drive::sim::starter::starter_scenarios;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

fn main() -> decision_drive::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: ablation_study <checkpoint_dir> [penalties|rounds|regularization]");
        std::process::exit(1);
    };
    let kind = args.next().unwrap_or_else(|| "penalties".into());
    let policy = load_policy(&dir.join("il_policy.ckpt"), PolicyShape::default())?;
    let decoder = load_decoder(&dir.join("il_decoder.ckpt"), DecoderShape::default())?;
    let source = ActionSource::Decoder(Arc::new(decoder));
    let scenarios = starter_scenarios();
    let inputs = AblationInputs {
        policy: &policy,
        source: &source,
        scenarios: &scenarios,
        base: TrainerConfig::default(),
        eval_seed: 0,
    };

    let start = Instant::now();
    let table = match kind.as_str() {
        "penalties" => ablate_penalties(&inputs)?,
        "rounds" => ablate_rounds(&inputs, &DEFAULT_ROUNDS)?,
        "regularization" => ablate_regularization(&inputs)?,
        other => {
            eprintln!("unknown ablation `{other}`");
            std::process::exit(1);
        }
    };
    print!("{}", table.to_text());
    for row in &table.rows {
        if !row.entropy_per_epoch.is_empty() {
            let first = row.entropy_per_epoch[0];
            let last = row.entropy_per_epoch[row.entropy_per_epoch.len() - 1];
            println!("{:<12} entropy {first:.3} -> {last:.3}, selected {:?}", row.label, row.selected_routes);
        }
    }
    println!("({:.0}s)", start.elapsed().as_secs_f64());
    Ok(())
}
