//! Command-line front end. The binary only forwards its arguments to [`run`].
//!
//! Every command resolves its configuration (file, environment path overrides, flags),
//! validates it before doing any work, stages its outputs, and on success moves them into
//! place next to a manifest naming the resolved config, the code version and the sha256 of
//! every input and output. A failed run leaves its partial outputs under `failed/`.

mod config;
mod staging;

pub use config::{
    require_file, DatasetOptions, EvalOptions, Overrides, PathField, Paths, RunConfig, SourceKind, PATH_ENV,
};
pub use staging::{Manifest, Staging};

use crate::action::{ActionSource, DecoderShape};
use crate::error::{Error, Result};
use crate::eval::ablation::{ablate_penalties, ablate_regularization, ablate_rounds, AblationInputs, DEFAULT_ROUNDS};
use crate::eval::{evaluate, AblationTable, EvalReport};
use crate::il::dataset::dataset_to_bytes;
use crate::il::{generate_dataset, read_dataset, train_il_with, ILMetrics};
use crate::io::{decoder_to_bytes, load_decoder, load_policy, params_hash, policy_to_bytes, sha256_hex};
use crate::policy::{PolicyParams, PolicyShape};
use crate::rl::{buffer::buffer_to_bytes, collect, online_rl, read_buffer, select_failed_routes, train_rl_with};
use crate::sim::starter::starter_scenarios;
use crate::sim::scenario::load_dir;
use crate::sim::ScenarioSpec;
use crate::action::DecoderParams;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const IL_POLICY: &str = "il_policy.ckpt";
pub const IL_DECODER: &str = "il_decoder.ckpt";
pub const RL_POLICY: &str = "rl_policy.ckpt";

#[derive(Debug, Parser)]
#[command(name = "decision-drive", version, about = "Imitation and online PPO training of discrete driving decisions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed for data generation, training and evaluation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel rollout and evaluation workers.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Rollout rounds of the online stage.
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    /// Epochs of the stage(s) the command trains.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Output directory, replacing the configured one.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scenario files.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosCommand,
    },
    /// Expert demonstration datasets.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
    /// Imitation stage.
    Il {
        #[command(subcommand)]
        action: IlCommand,
    },
    /// Online reinforcement stage, one step at a time.
    Rl {
        #[command(subcommand)]
        action: RlCommand,
    },
    /// Dataset, imitation, failed-route pre-pass, rollout rounds and evaluation in one run.
    Pipeline,
    /// Greedy closed-loop evaluation of a policy.
    Eval {
        /// Policy checkpoint; the RL checkpoint if present, else the imitation one.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Ablation tables.
    Ablate {
        #[command(subcommand)]
        kind: AblateCommand,
    },
    /// Summarises the evaluation reports and ablation tables in the report directory.
    Report,
}

#[derive(Debug, Subcommand)]
pub enum ScenariosCommand {
    /// Writes the bundled starter pack as TOML files.
    Gen,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Drives the expert over every scenario and records labelled ticks.
    Gen,
}

#[derive(Debug, Subcommand)]
pub enum IlCommand {
    /// Trains the decision heads and the trajectory decoder on the dataset.
    Train,
}

#[derive(Debug, Subcommand)]
pub enum RlCommand {
    /// Failed-route pre-pass and one collection round into a rollout buffer.
    Collect {
        /// Collecting policy; the imitation checkpoint by default.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        round: u32,
    },
    /// PPO training on rollout buffers, anchored to the imitation checkpoint.
    Train {
        /// Buffers to train on, in order; `rollout_round0.bin` by default.
        #[arg(long)]
        buffer: Vec<PathBuf>,
        /// Starting policy; the imitation checkpoint by default.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AblateCommand {
    /// Cumulative penalty-event sets.
    Penalties,
    /// One row per rollout-round count.
    Rounds {
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
    },
    /// PPO without regularisation, with an entropy bonus, and with the KL anchor.
    Regularization,
}

/// Parses `args` (program name first), runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, |k| std::env::var(k).ok()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation { .. } | Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Resolves the configuration for `cli`: file, then environment path overrides, then flags.
pub fn resolve_config(cli: &Cli, env: impl Fn(&str) -> Option<String>) -> Result<(RunConfig, Option<String>)> {
    let (mut cfg, hash) = match &cli.global.config {
        Some(p) => {
            let bytes = crate::io::read_file(p)?;
            (RunConfig::load(p)?, Some(sha256_hex(&bytes)))
        }
        None => (RunConfig::default(), None),
    };
    cfg.apply_env(env);
    let trains_il = matches!(cli.command, Command::Il { .. } | Command::Pipeline);
    let trains_rl = matches!(
        cli.command,
        Command::Rl { .. } | Command::Pipeline | Command::Ablate { .. }
    );
    let g = &cli.global;
    cfg.apply(&Overrides {
        seed: g.seed,
        workers: g.workers,
        rounds: g.rounds,
        il_epochs: g.epochs.filter(|_| trains_il),
        rl_epochs: g.epochs.filter(|_| trains_rl),
    });
    cfg.validate()?;
    if !matches!(cli.command, Command::Scenarios { .. } | Command::Report) {
        cfg.validate_scenario_dir()?;
    }
    Ok((cfg, hash))
}

/// Everything a command needs after validation.
struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    base_inputs: Vec<(String, String)>,
}

impl Ctx {
    fn dir(&self, configured: &Path) -> PathBuf {
        self.out.clone().unwrap_or_else(|| configured.to_path_buf())
    }

    fn scenarios(&self, inputs: &mut Vec<(String, String)>) -> Result<Vec<ScenarioSpec>> {
        match &self.cfg.paths.scenario_dir {
            Some(dir) => {
                let specs = load_dir(dir)?;
                if specs.is_empty() {
                    return Err(Error::validation(
                        "paths.scenario_dir",
                        format!("no scenario files in `{}`", dir.display()),
                    ));
                }
                for s in &specs {
                    inputs.push((format!("scenario:{}", s.id), sha256_hex(s.to_toml_string().as_bytes())));
                }
                Ok(specs)
            }
            None => {
                let specs = starter_scenarios();
                let text: String = specs.iter().map(|s| s.to_toml_string()).collect();
                inputs.push(("scenarios:bundled".into(), sha256_hex(text.as_bytes())));
                Ok(specs)
            }
        }
    }

    fn manifest(&self, command: &str, mut inputs: Vec<(String, String)>) -> Manifest {
        let mut all = self.base_inputs.clone();
        all.append(&mut inputs);
        Manifest::new(command, &self.cfg, all)
    }
}

fn hashed_input(inputs: &mut Vec<(String, String)>, path: &Path) -> Result<Vec<u8>> {
    let bytes = crate::io::read_file(path)?;
    inputs.push((path.display().to_string(), sha256_hex(&bytes)));
    Ok(bytes)
}

fn load_policy_input(inputs: &mut Vec<(String, String)>, field: &str, path: &Path) -> Result<PolicyParams> {
    require_file(field, path)?;
    hashed_input(inputs, path)?;
    load_policy(path, PolicyShape::default())
}

fn action_source(ctx: &Ctx, inputs: &mut Vec<(String, String)>) -> Result<ActionSource> {
    match ctx.cfg.eval.action_source {
        SourceKind::Oracle => Ok(ActionSource::Oracle),
        SourceKind::Decoder => {
            let path = ctx.cfg.paths.checkpoint_dir.join(IL_DECODER);
            require_file("paths.checkpoint_dir", &path)?;
            hashed_input(inputs, &path)?;
            Ok(ActionSource::Decoder(Arc::new(load_decoder(&path, DecoderShape::default())?)))
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable")
}

/// Runs a parsed command line with `env` as the environment.
pub fn execute(cli: &Cli, env: impl Fn(&str) -> Option<String>) -> Result<()> {
    let (cfg, config_hash) = resolve_config(cli, env)?;
    let mut base_inputs = Vec::new();
    if let (Some(p), Some(h)) = (&cli.global.config, config_hash) {
        base_inputs.push((format!("config:{}", p.display()), h));
    }
    let ctx = Ctx {
        cfg,
        out: cli.global.out.clone(),
        base_inputs,
    };
    match &cli.command {
        Command::Scenarios {
            action: ScenariosCommand::Gen,
        } => scenarios_gen(&ctx),
        Command::Dataset {
            action: DatasetCommand::Gen,
        } => dataset_gen(&ctx),
        Command::Il {
            action: IlCommand::Train,
        } => il_train(&ctx),
        Command::Rl {
            action: RlCommand::Collect { policy, round },
        } => rl_collect(&ctx, policy.as_deref(), *round),
        Command::Rl {
            action: RlCommand::Train { buffer, policy },
        } => rl_train(&ctx, buffer, policy.as_deref()),
        Command::Pipeline => pipeline(&ctx),
        Command::Eval { policy } => eval(&ctx, policy.as_deref()),
        Command::Ablate { kind } => ablate(&ctx, kind),
        Command::Report => report(&ctx),
    }
}

/// Runs `body` against a fresh staging area, committing on success and quarantining otherwise.
fn staged(dir: &Path, command: &str, body: impl FnOnce(&mut Staging) -> Result<Manifest>) -> Result<()> {
    let mut stage = Staging::new(dir, command)?;
    match body(&mut stage) {
        Ok(manifest) => {
            let written = stage.commit(manifest)?;
            eprintln!("{command}: wrote {}", written.display());
            Ok(())
        }
        Err(e) => {
            if let Ok(Some(q)) = stage.quarantine() {
                eprintln!("{command}: partial outputs moved to {}", q.display());
            }
            Err(e)
        }
    }
}

fn scenarios_gen(ctx: &Ctx) -> Result<()> {
    let dir = ctx
        .out
        .clone()
        .or_else(|| ctx.cfg.paths.scenario_dir.clone())
        .unwrap_or_else(|| PathBuf::from("scenarios"));
    staged(&dir, "scenarios gen", |st| {
        for s in starter_scenarios() {
            st.write(&dir.join(format!("{}.toml", s.id)), s.to_toml_string().as_bytes())?;
        }
        Ok(ctx.manifest("scenarios gen", vec![]))
    })
}

fn dataset_gen(ctx: &Ctx) -> Result<()> {
    let target = match &ctx.out {
        Some(d) => d.join(file_name(&ctx.cfg.paths.dataset, "dataset.bin")),
        None => ctx.cfg.paths.dataset.clone(),
    };
    let dir = parent_dir(&target);
    let mut inputs = Vec::new();
    let scenarios = ctx.scenarios(&mut inputs)?;
    staged(&dir, "dataset gen", |st| {
        let records = generate_dataset(&scenarios, ctx.cfg.dataset.steps_per_scenario, ctx.cfg.seed)?;
        st.write(&target, &dataset_to_bytes(&records)?)?;
        eprintln!("dataset gen: {} records from {} scenarios", records.len(), scenarios.len());
        Ok(ctx.manifest("dataset gen", inputs))
    })
}

fn il_train(ctx: &Ctx) -> Result<()> {
    require_file("paths.dataset", &ctx.cfg.paths.dataset)?;
    let dir = ctx.dir(&ctx.cfg.paths.checkpoint_dir);
    let mut inputs = Vec::new();
    hashed_input(&mut inputs, &ctx.cfg.paths.dataset)?;
    staged(&dir, "il train", |st| {
        let records = read_dataset(&ctx.cfg.paths.dataset)?;
        let metrics = train_il_stage(ctx, &records, &dir, st)?;
        print_il(&metrics);
        Ok(ctx.manifest("il train", inputs))
    })
}

fn train_il_stage(
    ctx: &Ctx,
    records: &[crate::il::ExpertRecord],
    dir: &Path,
    st: &mut Staging,
) -> Result<ILMetrics> {
    let il = &ctx.cfg.il;
    let init_policy = PolicyParams::new(PolicyShape::default(), il.seed);
    let init_decoder = DecoderParams::new(DecoderShape::default(), il.seed.wrapping_add(1));
    let out = train_il_with(records, init_policy, init_decoder, il, |m| {
        eprintln!(
            "il epoch {:>3}/{}: ce {:.4} bc {:.4} kl {:.3}",
            m.epoch + 1,
            il.epochs,
            m.ce,
            m.bc,
            m.vae
        )
    })?;
    st.write(&dir.join(IL_POLICY), &policy_to_bytes(&out.policy))?;
    st.write(&dir.join(IL_DECODER), &decoder_to_bytes(&out.decoder))?;
    st.write(&dir.join("il_metrics.json"), json(&out.metrics).as_bytes())?;
    Ok(out.metrics)
}

fn print_il(m: &ILMetrics) {
    println!(
        "imitation: {} train / {} held-out records, accuracy {}, decoder L1 {}",
        m.train_records,
        m.heldout_records,
        m.heldout_accuracy.map_or("-".into(), |a| format!("{:.3}", a)),
        m.heldout_l1.map_or("-".into(), |a| format!("{:.3} m", a)),
    );
}

#[derive(Serialize)]
struct Selection<'a> {
    selected: &'a [String],
}

fn rl_collect(ctx: &Ctx, policy: Option<&Path>, round: u32) -> Result<()> {
    let ckpt = &ctx.cfg.paths.checkpoint_dir;
    let dir = ctx.dir(ckpt);
    let mut inputs = Vec::new();
    let policy_path = policy.map_or_else(|| ckpt.join(IL_POLICY), Path::to_path_buf);
    let p = load_policy_input(&mut inputs, "paths.checkpoint_dir", &policy_path)?;
    let source = action_source(ctx, &mut inputs)?;
    let scenarios = ctx.scenarios(&mut inputs)?;
    staged(&dir, "rl collect", |st| {
        let selected = select_failed_routes(&p, &source, &scenarios, &ctx.cfg.rl)?;
        let ids: Vec<String> = selected.iter().map(|s| s.id.clone()).collect();
        println!("selected routes: {}", ids.join(", "));
        st.write(&dir.join("selected_routes.json"), json(&Selection { selected: &ids }).as_bytes())?;
        if !selected.is_empty() {
            let buffer = collect(&p, &source, &selected, &ctx.cfg.rl, round)?;
            println!(
                "round {round}: {} episodes, {} transitions, success {:.2}",
                buffer.episodes.len(),
                buffer.transition_count(),
                buffer.success_rate()
            );
            st.write(&dir.join(format!("rollout_round{round}.bin")), &buffer_to_bytes(&buffer)?)?;
        }
        Ok(ctx.manifest("rl collect", inputs))
    })
}

fn rl_train(ctx: &Ctx, buffers: &[PathBuf], policy: Option<&Path>) -> Result<()> {
    let ckpt = &ctx.cfg.paths.checkpoint_dir;
    let dir = ctx.dir(ckpt);
    let buffers: Vec<PathBuf> = if buffers.is_empty() {
        vec![ckpt.join("rollout_round0.bin")]
    } else {
        buffers.to_vec()
    };
    for b in &buffers {
        require_file("--buffer", b)?;
    }
    let mut inputs = Vec::new();
    let reference = load_policy_input(&mut inputs, "paths.checkpoint_dir", &ckpt.join(IL_POLICY))?;
    let start = match policy {
        Some(p) => load_policy_input(&mut inputs, "--policy", p)?,
        None => reference.clone(),
    };
    for b in &buffers {
        hashed_input(&mut inputs, b)?;
    }
    staged(&dir, "rl train", |st| {
        let mut current = start;
        let mut metrics = Vec::new();
        for b in &buffers {
            let buffer = read_buffer(b)?;
            let (next, m) = train_rl_with(&buffer, current, &reference, &ctx.cfg.rl, print_rl_epoch)?;
            current = next;
            metrics.extend(m);
        }
        st.write(&dir.join(RL_POLICY), &policy_to_bytes(&current))?;
        st.write(&dir.join("rl_metrics.json"), json(&metrics).as_bytes())?;
        Ok(ctx.manifest("rl train", inputs))
    })
}

fn print_rl_epoch(m: &crate::rl::RLEpochMetrics) {
    eprintln!(
        "rl round {} epoch {:>2}: ppo {:+.4} value {:.4} kl {:.5} entropy {:.3} clip {:.3}",
        m.round, m.epoch, m.ppo, m.value, m.kl, m.entropy, m.clip_fraction
    );
}

#[derive(Serialize)]
struct OnlineSummary<'a> {
    selected: &'a [String],
    rounds: &'a [crate::rl::RoundSummary],
    epochs: &'a [crate::rl::RLEpochMetrics],
}

fn write_report(st: &mut Staging, dir: &Path, stem: &str, r: &EvalReport) -> Result<()> {
    st.write(&dir.join(format!("{stem}.json")), r.to_json().as_bytes())?;
    st.write(&dir.join(format!("{stem}.csv")), r.to_csv().as_bytes())
}

fn pipeline(ctx: &Ctx) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let (data_path, ckpt, reports) = match &ctx.out {
        Some(d) => (d.join("dataset.bin"), d.clone(), d.clone()),
        None => (paths.dataset.clone(), paths.checkpoint_dir.clone(), paths.report_dir.clone()),
    };
    let mut inputs = Vec::new();
    let scenarios = ctx.scenarios(&mut inputs)?;
    staged(&reports, "pipeline", |st| {
        let cfg = &ctx.cfg;
        let records = generate_dataset(&scenarios, cfg.dataset.steps_per_scenario, cfg.seed)?;
        eprintln!("pipeline: {} expert records", records.len());
        st.write(&data_path, &dataset_to_bytes(&records)?)?;
        let il_metrics = train_il_stage(ctx, &records, &ckpt, st)?;
        print_il(&il_metrics);
        let policy = load_policy(&st.staged_path(&ckpt.join(IL_POLICY)), PolicyShape::default())?;
        let source = match cfg.eval.action_source {
            SourceKind::Oracle => ActionSource::Oracle,
            SourceKind::Decoder => ActionSource::Decoder(Arc::new(load_decoder(
                &st.staged_path(&ckpt.join(IL_DECODER)),
                DecoderShape::default(),
            )?)),
        };
        let before = evaluate(&policy, &source, &scenarios, cfg.seed, cfg.eval.workers)?;
        let online = online_rl(&policy, &policy, &source, &scenarios, &cfg.rl, print_rl_epoch)?;
        for b in &online.buffers {
            st.write(&ckpt.join(format!("rollout_round{}.bin", b.round_index)), &buffer_to_bytes(b)?)?;
        }
        st.write(&ckpt.join(RL_POLICY), &policy_to_bytes(&online.policy))?;
        st.write(
            &ckpt.join("rl_metrics.json"),
            json(&OnlineSummary {
                selected: &online.selected,
                rounds: &online.rounds,
                epochs: &online.metrics,
            })
            .as_bytes(),
        )?;
        let after = evaluate(&online.policy, &source, &scenarios, cfg.seed, cfg.eval.workers)?;
        let before = before.with_split(&online.selected);
        let after = after.with_split(&online.selected);
        write_report(st, &reports, "eval_il", &before)?;
        write_report(st, &reports, "eval", &after)?;
        println!("selected routes: {}", online.selected.join(", "));
        println!("{}", compare_line("IL", &before));
        println!("{}", compare_line("RL", &after));
        Ok(ctx.manifest("pipeline", inputs))
    })
}

fn compare_line(name: &str, r: &EvalReport) -> String {
    let rollout = r
        .split
        .as_ref()
        .map_or(String::new(), |s| format!(" | rollout routes SR {:.2} DS {:.2}", s.rollout.sr, s.rollout.ds));
    format!("{name}: DS {:.2} SR {:.2}{rollout}", r.ds, r.sr)
}

fn eval(ctx: &Ctx, policy: Option<&Path>) -> Result<()> {
    let ckpt = &ctx.cfg.paths.checkpoint_dir;
    let dir = ctx.dir(&ctx.cfg.paths.report_dir);
    let path = policy.map(Path::to_path_buf).unwrap_or_else(|| {
        let rl = ckpt.join(RL_POLICY);
        if rl.is_file() {
            rl
        } else {
            ckpt.join(IL_POLICY)
        }
    });
    let mut inputs = Vec::new();
    let p = load_policy_input(&mut inputs, "paths.checkpoint_dir", &path)?;
    let source = action_source(ctx, &mut inputs)?;
    let scenarios = ctx.scenarios(&mut inputs)?;
    staged(&dir, "eval", |st| {
        let report = evaluate(&p, &source, &scenarios, ctx.cfg.seed, ctx.cfg.eval.workers)?;
        write_report(st, &dir, "eval", &report)?;
        println!("{}", compare_line(&path.display().to_string(), &report));
        Ok(ctx.manifest("eval", inputs))
    })
}

/// Per-row manifest: enough to rerun the row and check its values.
#[derive(Serialize)]
struct RowManifest<'a> {
    table: &'a str,
    id: &'a str,
    label: &'a str,
    config: &'a Option<crate::rl::TrainerConfig>,
    eval_seed: u64,
    selected_routes: &'a [String],
    policy_hash: &'a str,
    ds: f64,
    sr: f64,
}

fn ablate(ctx: &Ctx, kind: &AblateCommand) -> Result<()> {
    let dir = ctx.dir(&ctx.cfg.paths.report_dir);
    let mut inputs = Vec::new();
    let policy = load_policy_input(
        &mut inputs,
        "paths.checkpoint_dir",
        &ctx.cfg.paths.checkpoint_dir.join(IL_POLICY),
    )?;
    let source = action_source(ctx, &mut inputs)?;
    let scenarios = ctx.scenarios(&mut inputs)?;
    let name = match kind {
        AblateCommand::Penalties => "penalties",
        AblateCommand::Rounds { .. } => "rounds",
        AblateCommand::Regularization => "regularization",
    };
    let command = format!("ablate {name}");
    staged(&dir, &command, |st| {
        let ab = AblationInputs {
            policy: &policy,
            source: &source,
            scenarios: &scenarios,
            base: ctx.cfg.rl.clone(),
            eval_seed: ctx.cfg.seed,
        };
        let table = match kind {
            AblateCommand::Penalties => ablate_penalties(&ab)?,
            AblateCommand::Rounds { counts } => {
                let counts = if counts.is_empty() { DEFAULT_ROUNDS.to_vec() } else { counts.clone() };
                ablate_rounds(&ab, &counts)?
            }
            AblateCommand::Regularization => ablate_regularization(&ab)?,
        };
        write_table(st, &dir, &table, ctx.cfg.seed)?;
        print!("{}", table.to_text());
        Ok(ctx.manifest(&command, inputs))
    })
}

fn write_table(st: &mut Staging, dir: &Path, table: &AblationTable, eval_seed: u64) -> Result<()> {
    let stem = format!("ablation_{}", table.kind);
    st.write(&dir.join(format!("{stem}.json")), table.to_json().as_bytes())?;
    st.write(&dir.join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
    st.write(&dir.join(format!("{stem}.txt")), table.to_text().as_bytes())?;
    for row in &table.rows {
        let m = RowManifest {
            table: &table.kind,
            id: &row.id,
            label: &row.label,
            config: &row.config,
            eval_seed,
            selected_routes: &row.selected_routes,
            policy_hash: &row.policy_hash,
            ds: row.ds,
            sr: row.sr,
        };
        st.write(&dir.join(&stem).join(format!("row-{}.manifest.json", row.id)), json(&m).as_bytes())?;
    }
    Ok(())
}

/// Text summary of the evaluation reports and ablation tables found in the report directory.
pub fn summarize_reports(dir: &Path, inputs: &mut Vec<(String, String)>) -> Result<String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".manifest.json")
        })
        .collect();
    names.sort();
    let mut out = String::new();
    for path in names {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if stem.starts_with("eval") {
            let bytes = hashed_input(inputs, &path)?;
            let r: EvalReport = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            out.push_str(&format!("{}\n", compare_line(&stem, &r)));
            for (cat, v) in &r.ability {
                out.push_str(&format!("  {:<4} {:>6.2}\n", cat.short(), v));
            }
        } else if stem.starts_with("ablation_") {
            let bytes = hashed_input(inputs, &path)?;
            let t: AblationTable = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            out.push_str(&format!("{stem}\n{}", t.to_text()));
        }
    }
    if out.is_empty() {
        return Err(Error::validation(
            "paths.report_dir",
            format!("no reports in `{}`", dir.display()),
        ));
    }
    Ok(out)
}

fn report(ctx: &Ctx) -> Result<()> {
    let src = ctx.cfg.paths.report_dir.clone();
    if !src.is_dir() {
        return Err(Error::validation("paths.report_dir", format!("`{}` is not a directory", src.display())));
    }
    let mut inputs = Vec::new();
    let text = summarize_reports(&src, &mut inputs)?;
    let dir = ctx.dir(&src);
    staged(&dir, "report", |st| {
        st.write(&dir.join("summary.txt"), text.as_bytes())?;
        print!("{text}");
        Ok(ctx.manifest("report", inputs))
    })
}

fn file_name(path: &Path, fallback: &str) -> PathBuf {
    path.file_name().map_or_else(|| fallback.into(), PathBuf::from)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Hash of a policy's parameters, as recorded in manifests.
pub fn policy_hash(p: &PolicyParams) -> String {
    params_hash(&p.values)
}
