//! Experiment configuration: a TOML document of plain keys, validated in full
//! before anything runs.

use crate::evaluation::EvalSuite;
use crate::model::{ModelConfig, LearnerInput};
use crate::task::Task;
use crate::training::{RewardMode, TrainConfig};
use crate::world::GridLayouts;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse: {0}")]
    Parse(String),
    #[error("invalid override '{0}', expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Network widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 32 filters, 128-wide FC and LSTM.
    Paper,
    /// 8 filters, 64-wide FC and LSTM.
    Desk,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub settings: usize,
    pub first_seed: u64,
    pub noise_rate: f64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { settings: 100, first_seed: 1_000_000, noise_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub mode: RewardMode,
    pub latent_dim: usize,
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub t_max: Option<u32>,
    pub checkpoint_interval: u64,
    /// Output root; the `PROBE_RUNS` environment variable or `runs` otherwise.
    pub output_dir: Option<PathBuf>,
    pub preset: Preset,
    pub filters: Option<usize>,
    pub fc_dim: Option<usize>,
    pub lstm_dim: Option<usize>,
    pub gamma: f64,
    pub entropy_weight: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub count_beta: f64,
    pub eval: EvalSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ExperimentConfig {
            task: Task::Passing,
            mode: RewardMode::MindChange,
            latent_dim: 8,
            iterations: t.iterations,
            seeds: vec![0],
            t_max: None,
            checkpoint_interval: t.checkpoint_interval,
            output_dir: None,
            preset: Preset::Desk,
            filters: None,
            fc_dim: None,
            lstm_dim: None,
            gamma: t.gamma,
            entropy_weight: t.entropy_weight,
            learning_rate: t.learning_rate,
            epsilon_start: t.epsilon_start,
            epsilon_end: t.epsilon_end,
            count_beta: t.count_beta,
            eval: EvalSpec::default(),
        }
    }
}

pub const OUTPUT_ENV: &str = "PROBE_RUNS";
pub const SNAPSHOT_FILE: &str = "config.toml";

/// Parse `text` with `key=value` overrides applied on top. Override values use
/// TOML syntax; bare words are taken as strings. Dotted keys reach into
/// tables (`eval.settings=20`).
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = parse_value(raw);
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| ConfigError::Override(o.clone()))?;
        let mut cur = &mut table;
        for p in parts {
            let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override(o.clone()))?;
        }
        cur.insert(last.to_string(), value);
    }
    let cfg: ExperimentConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_with_overrides(s, &[])
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        parse_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.eval.settings == 0 {
            return bad("eval.settings must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.eval.noise_rate) {
            return bad(format!("eval.noise_rate must lie in [0, 1], got {}", self.eval.noise_rate));
        }
        self.model_config(&GridLayouts::default()).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for &s in &self.seeds {
            self.train_config(s).validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn model_config(&self, layouts: &GridLayouts) -> ModelConfig {
        let base = match self.preset {
            Preset::Paper => ModelConfig::paper(self.task, layouts, self.latent_dim),
            Preset::Desk => ModelConfig::desk(self.task, layouts, self.latent_dim),
        };
        ModelConfig {
            filters: self.filters.unwrap_or(base.filters),
            fc_dim: self.fc_dim.unwrap_or(base.fc_dim),
            lstm_dim: self.lstm_dim.unwrap_or(base.lstm_dim),
            learner_input: LearnerInput::Mind,
            ..base
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            seed,
            reward_mode: self.mode,
            gamma: self.gamma,
            entropy_weight: self.entropy_weight,
            learning_rate: self.learning_rate,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            count_beta: self.count_beta,
            checkpoint_interval: self.checkpoint_interval,
            t_max: self.t_max,
            ..TrainConfig::default()
        }
    }

    pub fn eval_suite(&self) -> EvalSuite {
        EvalSuite::new(self.task, self.eval.settings, self.eval.first_seed).with_noise(self.eval.noise_rate)
    }

    /// The output root: the config value, else the environment variable, else `runs`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// `<root>/<task>/<mode>/<seed>`.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_root().join(self.task.name()).join(self.mode.name()).join(seed.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg: ExperimentConfig = "".parse().unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn full_document_parses() {
        let cfg: ExperimentConfig = r#"
            task = "sorting"
            mode = "passive"
            latent_dim = 2
            iterations = 10
            seeds = [1, 2, 3]
            t_max = 20
            preset = "paper"
            lstm_dim = 16
            [eval]
            settings = 5
        "#
        .parse()
        .unwrap();
        assert_eq!(cfg.task, Task::Sorting);
        assert_eq!(cfg.mode, RewardMode::Passive);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        let m = cfg.model_config(&GridLayouts::default());
        assert_eq!((m.filters, m.fc_dim, m.lstm_dim, m.latent_dim), (32, 128, 16, 2));
        assert_eq!(cfg.train_config(2).t_max, Some(20));
        assert_eq!(cfg.eval_suite().seeds.len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!("lerning_rate = 0.1".parse::<ExperimentConfig>(), Err(ConfigError::Parse(_))));
        assert!("[eval]\nsetings = 3".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        for doc in ["gamma = 1.2", "seeds = []", "latent_dim = 0", "iterations = 0", "[eval]\nnoise_rate = 2.0"] {
            assert!(matches!(doc.parse::<ExperimentConfig>(), Err(ConfigError::Invalid(_))), "{doc}");
        }
        assert!("task = \"chess\"".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn overrides_win_over_the_document() {
        let over = vec!["iterations=7".to_string(), "mode=count_based".into(), "eval.settings=3".into()];
        let cfg = parse_with_overrides("iterations = 100\nmode = \"passive\"", &over).unwrap();
        assert_eq!(cfg.iterations, 7);
        assert_eq!(cfg.mode, RewardMode::CountBased);
        assert_eq!(cfg.eval.settings, 3);
        assert!(matches!(parse_with_overrides("", &["iterations".into()]), Err(ConfigError::Override(_))));
        assert!(parse_with_overrides("", &["gamma=1.5".into()]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = ExperimentConfig { task: Task::Maze, seeds: vec![4, 5], t_max: Some(9), ..Default::default() };
        let back: ExperimentConfig = cfg.to_toml().parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn run_dir_layout() {
        let cfg = ExperimentConfig { output_dir: Some("out".into()), task: Task::Sorting, ..Default::default() };
        assert_eq!(cfg.run_dir(3), Path::new("out/sorting/mind_change/3"));
    }
}
