//! The two intertwined learning processes: imitation of the demonstrator and
//! actor-critic training of the probing policy.

mod optimizer;
mod reward;
mod rollout;
mod trainer;

pub use optimizer::{OptimError, RmsProp, StepInfo};
pub use reward::{
    discounted_returns, learner_step_rewards, probing_reward, tick_mind_rewards, CountTable, RewardError,
};
pub use rollout::{rollout, LearnerControl, Trajectory};
pub use trainer::{
    il_update, iteration_rng, rl_update, MetricsRow, RunPaths, Trainer, TrainerState, CHECKPOINT_DIR, METRICS_FILE, RESUME_FILE,
    STATE_FILE,
};

use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Source of the learner's training reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Squared change of the mind vector.
    MindChange,
    /// `β / sqrt(n(digest))` over world-state visit counts.
    CountBased,
    /// The imitation cross-entropy of the current step.
    SelfSupervised,
    /// Uniformly random learner, no policy training.
    RandomProbe,
    /// Learner removed from the environment.
    Passive,
}

impl RewardMode {
    pub const ALL: [RewardMode; 5] = [
        RewardMode::MindChange,
        RewardMode::CountBased,
        RewardMode::SelfSupervised,
        RewardMode::RandomProbe,
        RewardMode::Passive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardMode::MindChange => "mind_change",
            RewardMode::CountBased => "count_based",
            RewardMode::SelfSupervised => "self_supervised",
            RewardMode::RandomProbe => "random_probe",
            RewardMode::Passive => "passive",
        }
    }

    /// Whether the learner policy and value head are trained.
    pub fn trains_learner(self) -> bool {
        matches!(self, RewardMode::MindChange | RewardMode::CountBased | RewardMode::SelfSupervised)
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        RewardMode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown reward mode '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    pub seed: u64,
    pub reward_mode: RewardMode,
    pub gamma: f64,
    pub entropy_weight: f64,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub clip_norm: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub count_beta: f64,
    pub checkpoint_interval: u64,
    /// Overrides the task's episode step limit.
    pub t_max: Option<u32>,
    /// Record wall-clock seconds in the metrics log; off keeps logs byte-identical.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            seed: 0,
            reward_mode: RewardMode::MindChange,
            gamma: 0.95,
            entropy_weight: 0.01,
            learning_rate: 1e-3,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            clip_norm: 5.0,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            count_beta: 1.0,
            checkpoint_interval: 100,
            t_max: None,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || self.rmsprop_epsilon <= 0.0 {
            return Err("rmsprop_decay must lie in [0, 1) and rmsprop_epsilon be positive".into());
        }
        if self.entropy_weight < 0.0 || self.count_beta < 0.0 || self.clip_norm <= 0.0 {
            return Err("entropy_weight and count_beta must be non-negative, clip_norm positive".into());
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return Err("exploration rates must lie in [0, 1]".into());
        }
        if self.epsilon_end > self.epsilon_start {
            return Err("epsilon_end must not exceed epsilon_start".into());
        }
        if self.checkpoint_interval == 0 {
            return Err("checkpoint_interval must be at least 1".into());
        }
        if self.t_max == Some(0) {
            return Err("t_max must be at least 1".into());
        }
        Ok(())
    }

    /// Linear anneal from `epsilon_start` at iteration 0 to `epsilon_end` at
    /// iteration `N - 1`.
    pub fn epsilon(&self, iteration: u64) -> f64 {
        if self.iterations <= 1 {
            return self.epsilon_start;
        }
        let frac = iteration.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        self.epsilon_start - (self.epsilon_start - self.epsilon_end) * frac
    }

    pub fn optimizer(&self) -> RmsProp {
        RmsProp {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            epsilon: self.rmsprop_epsilon,
            clip_norm: Some(self.clip_norm),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("layout: {0}")]
    Layout(#[from] crate::world::LayoutError),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: u64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trainer state: {0}")]
    State(String),
}

#[cfg(test)]
mod tests;
