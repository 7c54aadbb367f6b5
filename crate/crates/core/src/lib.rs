//! Interactive agent modeling by learning to probe.
//!
//! A learner imitates a rule-based demonstrator while a probing policy, rewarded
//! only by the change in the learner's latent estimate of the demonstrator's
//! mind, perturbs the world to elicit new demonstrator behaviour.

pub mod applications;
pub mod config;
pub mod demonstrators;
pub mod evaluation;
pub mod model;
pub mod sorting;
pub mod task;
pub mod training;
pub mod world;

use serde::{Deserialize, Serialize};

/// Whether a layout is the single fixed training setting or a randomized test setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettingMode {
    Train,
    Test,
}

pub use task::{ActionCode, ActionSpace, Env, Task};
