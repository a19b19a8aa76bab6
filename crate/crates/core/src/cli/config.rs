//! Run configuration: TOML file, path overrides from the environment, then command-line flags.

use crate::error::{Error, Result};
use crate::il::ILConfig;
use crate::rl::TrainerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variables that may override `[paths]` entries.
pub const PATH_ENV: [(&str, PathField); 4] = [
    ("DECISION_DRIVE_SCENARIO_DIR", PathField::ScenarioDir),
    ("DECISION_DRIVE_DATASET", PathField::Dataset),
    ("DECISION_DRIVE_CHECKPOINT_DIR", PathField::CheckpointDir),
    ("DECISION_DRIVE_REPORT_DIR", PathField::ReportDir),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathField {
    ScenarioDir,
    Dataset,
    CheckpointDir,
    ReportDir,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory of scenario TOML files; the bundled starter pack when unset.
    pub scenario_dir: Option<PathBuf>,
    pub dataset: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            scenario_dir: None,
            dataset: "runs/dataset.bin".into(),
            checkpoint_dir: "runs/checkpoints".into(),
            report_dir: "runs/reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Oracle,
    #[default]
    Decoder,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetOptions {
    pub steps_per_scenario: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            steps_per_scenario: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Trajectories for evaluation and rollouts: the learned decoder or the procedural oracle.
    pub action_source: SourceKind,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            action_source: SourceKind::Decoder,
            workers: TrainerConfig::default().workers,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; copied into the imitation and reinforcement stages on resolution.
    pub seed: u64,
    pub paths: Paths,
    pub dataset: DatasetOptions,
    pub il: ILConfig,
    pub rl: TrainerConfig,
    pub eval: EvalOptions,
}

/// Command-line values that override configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub rounds: Option<usize>,
    pub il_epochs: Option<usize>,
    pub rl_epochs: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn set_path(&mut self, field: PathField, value: PathBuf) {
        match field {
            PathField::ScenarioDir => self.paths.scenario_dir = Some(value),
            PathField::Dataset => self.paths.dataset = value,
            PathField::CheckpointDir => self.paths.checkpoint_dir = value,
            PathField::ReportDir => self.paths.report_dir = value,
        }
    }

    /// Applies path overrides from `lookup` (normally the process environment).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for (var, field) in PATH_ENV {
            if let Some(v) = lookup(var).filter(|v| !v.is_empty()) {
                self.set_path(field, v.into());
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.rl.workers = w;
            self.eval.workers = w;
        }
        if let Some(r) = o.rounds {
            self.rl.rollout_rounds = r;
        }
        if let Some(e) = o.il_epochs {
            self.il.epochs = e;
        }
        if let Some(e) = o.rl_epochs {
            self.rl.epochs = e;
        }
        self.il.seed = self.seed;
        self.rl.seed = self.seed;
    }

    /// Field-level checks of every section.
    pub fn validate(&self) -> Result<()> {
        self.il.validate()?;
        self.rl.validate()?;
        if self.dataset.steps_per_scenario == 0 {
            return Err(Error::validation("dataset.steps_per_scenario", "must be positive"));
        }
        if self.eval.workers == 0 {
            return Err(Error::validation("eval.workers", "must be positive"));
        }
        Ok(())
    }

    /// The scenario directory, when set, must exist for commands that read scenarios.
    pub fn validate_scenario_dir(&self) -> Result<()> {
        if let Some(dir) = &self.paths.scenario_dir {
            if !dir.is_dir() {
                return Err(Error::validation(
                    "paths.scenario_dir",
                    format!("`{}` is not a directory", dir.display()),
                ));
            }
        }
        Ok(())
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// Fails with a field-level diagnostic when a required input file is missing.
pub fn require_file(field: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("`{}` does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.seed = 7;
        c.rl.kl_weight = 0.25;
        c.paths.scenario_dir = Some("pack".into());
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml_str("[rl]\ngama = 0.9\n").unwrap_err().to_string();
        assert!(err.contains("gama"), "{err}");
    }

    #[test]
    fn invalid_values_name_their_field() {
        let mut c = RunConfig::default();
        c.rl.gamma = 1.5;
        assert!(matches!(c.validate(), Err(Error::Validation { field, .. }) if field == "rl.gamma"));
        let mut c = RunConfig::default();
        c.il.batch_size = 0;
        assert!(matches!(c.validate(), Err(Error::Validation { field, .. }) if field.starts_with("il.")));
    }

    #[test]
    fn environment_overrides_paths_only() {
        let mut c = RunConfig::default();
        c.apply_env(|k| (k == "DECISION_DRIVE_REPORT_DIR").then(|| "elsewhere".to_string()));
        assert_eq!(c.paths.report_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.paths.dataset, Paths::default().dataset);
    }

    #[test]
    fn flags_override_and_seed_propagates() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            seed: Some(3),
            workers: Some(2),
            rounds: Some(4),
            il_epochs: None,
            rl_epochs: Some(1),
        });
        assert_eq!((c.il.seed, c.rl.seed), (3, 3));
        assert_eq!((c.rl.workers, c.eval.workers), (2, 2));
        assert_eq!((c.rl.rollout_rounds, c.rl.epochs), (4, 1));
        assert_eq!(c.il.epochs, ILConfig::default().epochs);
    }
}
