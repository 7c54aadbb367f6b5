//! The learner's mind model: behavior tracker, demonstrator and learner policy
//! branches with attention fusion, and the value head.
//!
//! Everything is plain `f64` arithmetic. Forward passes return step records
//! that double as the activation tape for backpropagation through time.

pub mod checkpoint;
pub mod layers;
pub mod linalg;
mod policy;
mod tape;
mod tracker;


pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{Dense, Lstm, LstmStep, Param};
pub use policy::{PolicyNet, PolicyStep};
pub use tape::{IlTape, RlStats, RlTape};
pub use tracker::{Tracker, TrackerStep};

use crate::task::{ActionCode, Task};
use crate::world::{GridLayouts, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("backward already ran on this tape; run a fresh forward pass")]
    TapeConsumed,
    #[error("tape is empty")]
    EmptyTape,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// What the learner-policy branch consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerInput {
    /// Its own observation fused with the mind vector.
    Mind,
    /// Both agents' observations stacked along channels, no fusion.
    NoMind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    /// `[height, width, channels]` of one agent's observation.
    pub obs_shape: [usize; 3],
    pub demo_heads: Vec<usize>,
    pub learner_heads: Vec<usize>,
    pub latent_dim: usize,
    pub filters: usize,
    pub fc_dim: usize,
    pub lstm_dim: usize,
    pub learner_input: LearnerInput,
}

impl ModelConfig {
    /// Full-width network: 32 filters, 128-unit layers.
    pub fn paper(task: Task, layouts: &GridLayouts, latent_dim: usize) -> Self {
        let (h, w, c) = task.observation_shape(layouts);
        ModelConfig {
            task,
            obs_shape: [h, w, c],
            demo_heads: task.demonstrator_space().heads,
            learner_heads: task.learner_space().heads,
            latent_dim,
            filters: 32,
            fc_dim: 128,
            lstm_dim: 128,
            learner_input: LearnerInput::Mind,
        }
    }

    /// Reduced widths for single-core runs.
    pub fn desk(task: Task, layouts: &GridLayouts, latent_dim: usize) -> Self {
        ModelConfig { filters: 8, fc_dim: 64, lstm_dim: 64, ..ModelConfig::paper(task, layouts, latent_dim) }
    }

    pub fn cells(&self) -> usize {
        self.obs_shape[0] * self.obs_shape[1]
    }

    pub fn channels(&self) -> usize {
        self.obs_shape[2]
    }

    pub fn learner_channels(&self) -> usize {
        match self.learner_input {
            LearnerInput::Mind => self.channels(),
            LearnerInput::NoMind => 2 * self.channels(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.obs_shape.contains(&0) {
            return bad("observation shape has a zero dimension");
        }
        let (h, w, c) = {
            let layouts = GridLayouts::default();
            self.task.observation_shape(&layouts)
        };
        if self.task.grid().is_none() && self.obs_shape != [h, w, c] {
            return bad("observation shape does not match the task");
        }
        if self.task.grid().is_some() && (self.obs_shape[0] != h || self.obs_shape[1] != w) {
            return bad("observation shape does not match the task");
        }
        if self.demo_heads.is_empty() || self.learner_heads.is_empty() {
            return bad("action heads must be non-empty");
        }
        if self.demo_heads.len() > 2 || self.learner_heads.len() > 2 {
            return bad("at most two factored heads are supported");
        }
        if self.demo_heads.iter().chain(&self.learner_heads).any(|&n| n == 0) {
            return bad("action heads must have at least one action");
        }
        if self.latent_dim == 0 || self.filters == 0 || self.fc_dim == 0 || self.lstm_dim == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// The latent mind vector `m^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MindVector(pub Vec<f64>);

impl MindVector {
    pub fn zeros(dim: usize) -> Self {
        MindVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Hidden and cell vectors of one recurrent component.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(n: usize) -> Self {
        RecurrentState { h: vec![0.0; n], c: vec![0.0; n] }
    }
}

impl LstmStep {
    pub fn state(&self) -> RecurrentState {
        RecurrentState { h: self.h.clone(), c: self.c.clone() }
    }
}

/// One categorical distribution per action head; the joint is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    pub factors: Vec<Vec<f64>>,
}

impl PolicyDistribution {
    pub fn from_logits(logits: &[f64], heads: &[usize]) -> Self {
        let mut factors = Vec::with_capacity(heads.len());
        let mut off = 0;
        for &n in heads {
            factors.push(linalg::softmax(&logits[off..off + n]));
            off += n;
        }
        PolicyDistribution { factors }
    }

    pub fn prob(&self, code: ActionCode) -> f64 {
        self.factors.iter().enumerate().map(|(k, p)| p[code.part(k)]).product()
    }

    pub fn log_prob(&self, code: ActionCode) -> f64 {
        self.factors.iter().enumerate().map(|(k, p)| p[code.part(k)].ln()).sum()
    }

    /// Per-head argmax; ties resolve to the lowest index.
    pub fn argmax(&self) -> ActionCode {
        let pick = |p: &Vec<f64>| {
            p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
        };
        ActionCode { first: pick(&self.factors[0]), second: self.factors.get(1).map_or(0, pick) }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionCode {
        let draw = |p: &Vec<f64>, rng: &mut R| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &v) in p.iter().enumerate() {
                acc += v;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let first = draw(&self.factors[0], rng);
        let second = match self.factors.get(1) {
            Some(p) => draw(p, rng),
            None => 0,
        };
        ActionCode { first, second }
    }

    /// Entropy of the joint distribution (sum over independent heads).
    pub fn entropy(&self) -> f64 {
        self.factors
            .iter()
            .map(|p| -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Demonstrator,
    Learner,
}

/// Disjoint parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Tracker,
    Demonstrator,
    Learner,
    Value,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Tracker, Block::Demonstrator, Block::Learner, Block::Value];
}

/// All four blocks: tracker `θ_M`, demonstrator branch `θ_d`, learner branch
/// `θ_l` and value head `θ_V`.
#[derive(Debug, Clone, PartialEq)]
pub struct MindModel {
    pub config: ModelConfig,
    pub tracker: Tracker,
    pub demo: PolicyNet,
    pub learner: PolicyNet,
    pub value: Dense,
}

impl MindModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tracker = Tracker::new(&config, &mut rng);
        let demo = PolicyNet::new("demo", &config, config.channels(), &config.demo_heads, true, &mut rng);
        let fused = config.learner_input == LearnerInput::Mind;
        let learner =
            PolicyNet::new("learner", &config, config.learner_channels(), &config.learner_heads, fused, &mut rng);
        let value = Dense::new("value.fc", config.lstm_dim, 1, &mut rng);
        Ok(MindModel { config, tracker, demo, learner, value })
    }

    pub fn initial_mind(&self) -> MindVector {
        MindVector::zeros(self.config.latent_dim)
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.config.lstm_dim)
    }

    pub fn branch(&self, branch: Branch) -> &PolicyNet {
        match branch {
            Branch::Demonstrator => &self.demo,
            Branch::Learner => &self.learner,
        }
    }

    /// One tracker step on the observed demonstrator pair.
    pub fn track_behavior(
        &self,
        prev: &RecurrentState,
        s_d: &Observation,
        a_d: ActionCode,
    ) -> (MindVector, RecurrentState) {
        let step = self.tracker.step(s_d, a_d, prev);
        (MindVector(step.m.clone()), step.lstm.state())
    }

    pub fn policy_forward(
        &self,
        branch: Branch,
        s: &Observation,
        m_prev: &MindVector,
        prev: &RecurrentState,
    ) -> (PolicyDistribution, RecurrentState) {
        let step = self.branch(branch).step(s, &m_prev.0, prev);
        let state = step.lstm.state();
        (step.dist, state)
    }

    /// Value estimate from the learner branch's post-step hidden state.
    pub fn value_forward(&self, learner_state: &RecurrentState) -> f64 {
        self.value.forward(&learner_state.h)[0]
    }

    pub fn params(&self, block: Block) -> Vec<&Param> {
        match block {
            Block::Tracker => self.tracker.params(),
            Block::Demonstrator => self.demo.params(),
            Block::Learner => self.learner.params(),
            Block::Value => self.value.params().to_vec(),
        }
    }

    pub fn params_mut(&mut self, block: Block) -> Vec<&mut Param> {
        match block {
            Block::Tracker => self.tracker.params_mut(),
            Block::Demonstrator => self.demo.params_mut(),
            Block::Learner => self.learner.params_mut(),
            Block::Value => self.value.params_mut().into_iter().collect(),
        }
    }

    pub fn all_params(&self) -> Vec<&Param> {
        Block::ALL.iter().flat_map(|&b| self.params(b)).collect()
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        self.params_mut_of(&Block::ALL)
    }

    /// Mutable parameters of several blocks at once, in block order.
    pub fn params_mut_of(&mut self, blocks: &[Block]) -> Vec<&mut Param> {
        let MindModel { tracker, demo, learner, value, .. } = self;
        let mut out = Vec::new();
        if blocks.contains(&Block::Tracker) {
            out.extend(tracker.params_mut());
        }
        if blocks.contains(&Block::Demonstrator) {
            out.extend(demo.params_mut());
        }
        if blocks.contains(&Block::Learner) {
            out.extend(learner.params_mut());
        }
        if blocks.contains(&Block::Value) {
            out.extend(value.params_mut());
        }
        out
    }

    pub fn zero_grad(&mut self, block: Block) {
        self.params_mut(block).into_iter().for_each(Param::zero_grad);
    }

    pub fn parameter_count(&self, block: Block) -> usize {
        self.params(block).iter().map(|p| p.len()).sum()
    }
}
