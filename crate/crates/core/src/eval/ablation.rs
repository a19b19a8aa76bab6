//! Ablation runners: penalty-event sets, rollout-round counts and policy regularisation.

use super::{evaluate, EvalReport};
use crate::action::ActionSource;
use crate::error::Result;
use crate::io::params_hash;
use crate::policy::PolicyParams;
use crate::rl::{online_rl, RoundSummary, TrainerConfig};
use crate::sim::{Category, PenaltyKind, PenaltySet, ScenarioSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Everything an ablation needs besides the varied setting.
#[derive(Debug, Clone)]
pub struct AblationInputs<'a> {
    /// Imitation policy; also the KL reference.
    pub policy: &'a PolicyParams,
    pub source: &'a ActionSource,
    pub scenarios: &'a [ScenarioSpec],
    pub base: TrainerConfig,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub id: String,
    pub label: String,
    /// Training configuration; `None` for the imitation-only baseline.
    pub config: Option<TrainerConfig>,
    pub ds: f64,
    pub sr: f64,
    pub ability: BTreeMap<Category, f64>,
    pub mean_ability: f64,
    pub selected_routes: Vec<String>,
    pub rounds: Vec<RoundSummary>,
    /// Mean policy entropy per training epoch, in order.
    pub entropy_per_epoch: Vec<f64>,
    pub policy_hash: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub kind: String,
    pub rows: Vec<AblationRow>,
}

/// Trains from the imitation policy with `cfg` and evaluates the result.
pub fn run_row(inputs: &AblationInputs, id: &str, label: &str, cfg: Option<TrainerConfig>) -> Result<AblationRow> {
    let (policy, selected, rounds, entropy) = match &cfg {
        None => (inputs.policy.clone(), vec![], vec![], vec![]),
        Some(cfg) => {
            let out = online_rl(inputs.policy, inputs.policy, inputs.source, inputs.scenarios, cfg, |_| {})?;
            let entropy = out.metrics.iter().map(|m| m.entropy).collect();
            (out.policy, out.selected, out.rounds, entropy)
        }
    };
    let workers = cfg.as_ref().map_or(inputs.base.workers, |c| c.workers);
    let report = evaluate(&policy, inputs.source, inputs.scenarios, inputs.eval_seed, workers)?
        .with_split(&selected);
    Ok(AblationRow {
        id: id.into(),
        label: label.into(),
        config: cfg,
        ds: report.ds,
        sr: report.sr,
        ability: report.ability.clone(),
        mean_ability: report.mean_ability,
        selected_routes: selected,
        rounds,
        entropy_per_epoch: entropy,
        policy_hash: params_hash(&policy.values),
        report,
    })
}

/// Cumulative penalty sets: imitation baseline, then C, C+TL, C+TL+RD, C+TL+RD+S.
pub fn penalty_configurations() -> Vec<Option<PenaltySet>> {
    let mut out = vec![None];
    for n in 1..=PenaltyKind::ALL.len() {
        out.push(Some(PenaltySet::from_kinds(&PenaltyKind::ALL[..n])));
    }
    out
}

pub fn ablate_penalties(inputs: &AblationInputs) -> Result<AblationTable> {
    ablate_penalty_sets(inputs, &penalty_configurations())
}

/// Runs the requested penalty configurations (`None` is the imitation baseline).
pub fn ablate_penalty_sets(inputs: &AblationInputs, sets: &[Option<PenaltySet>]) -> Result<AblationTable> {
    let rows = sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let id = (i + 1).to_string();
            match set {
                None => run_row(inputs, &id, "IL", None),
                Some(p) => {
                    let cfg = TrainerConfig {
                        penalties: *p,
                        ..inputs.base.clone()
                    };
                    run_row(inputs, &id, &p.label(), Some(cfg))
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable {
        kind: "penalties".into(),
        rows,
    })
}

pub const DEFAULT_ROUNDS: [usize; 4] = [1, 2, 3, 4];

pub fn ablate_rounds(inputs: &AblationInputs, rounds: &[usize]) -> Result<AblationTable> {
    let rows = rounds
        .iter()
        .map(|&r| {
            let cfg = TrainerConfig {
                rollout_rounds: r,
                ..inputs.base.clone()
            };
            run_row(inputs, &format!("R{r}"), &format!("rounds={r}"), Some(cfg))
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable {
        kind: "rounds".into(),
        rows,
    })
}

pub const ENTROPY_BONUS: f64 = 0.01;

/// The three regularisation variants, in table order.
pub fn regularization_variants(base: &TrainerConfig) -> Vec<(&'static str, TrainerConfig)> {
    vec![
        (
            "PPO-Vanilla",
            TrainerConfig {
                kl_weight: 0.0,
                entropy_coef: 0.0,
                ..base.clone()
            },
        ),
        (
            "PPO-Entropy",
            TrainerConfig {
                kl_weight: 0.0,
                entropy_coef: ENTROPY_BONUS,
                ..base.clone()
            },
        ),
        ("PPO-KL", base.clone()),
    ]
}

pub fn ablate_regularization(inputs: &AblationInputs) -> Result<AblationTable> {
    let rows = regularization_variants(&inputs.base)
        .into_iter()
        .map(|(name, cfg)| run_row(inputs, name, name, Some(cfg)))
        .collect::<Result<_>>()?;
    Ok(AblationTable {
        kind: "regularization".into(),
        rows,
    })
}

fn mark(row: &AblationRow, kind: PenaltyKind) -> &'static str {
    match &row.config {
        Some(c) if c.penalties.contains(kind) => "x",
        _ => "",
    }
}

impl AblationTable {
    fn columns(&self) -> Vec<String> {
        let mut cols = vec!["ID".to_string(), "Setting".to_string()];
        if self.kind == "penalties" {
            cols.extend(PenaltyKind::ALL.iter().map(|k| k.short().to_string()));
        }
        cols.extend(["DS", "SR"].map(String::from));
        cols.extend(Category::ALL.iter().map(|c| c.short().to_string()));
        cols.push("Mean".into());
        cols
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut c = vec![r.id.clone(), r.label.clone()];
                if self.kind == "penalties" {
                    c.extend(PenaltyKind::ALL.iter().map(|k| mark(r, *k).to_string()));
                }
                c.push(format!("{:.2}", r.ds));
                c.push(format!("{:.2}", r.sr));
                for cat in Category::ALL {
                    c.push(r.ability.get(&cat).map_or("-".into(), |v| format!("{v:.2}")));
                }
                c.push(format!("{:.2}", r.mean_ability));
                c
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns().join(",");
        s.push('\n');
        for row in self.cells() {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Column-aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let header = self.columns();
        let body = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut s = String::new();
        let _ = writeln!(s, "{}", line(&header));
        let _ = writeln!(s, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        for r in &body {
            let _ = writeln!(s, "{}", line(r));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }
}
