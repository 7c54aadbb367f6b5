use super::reward::{discounted_returns, learner_step_rewards, tick_mind_rewards, CountTable};
use super::rollout::{rollout, LearnerControl, Trajectory};
use super::{RewardMode, RmsProp, TrainConfig, TrainError};
use crate::model::{load_checkpoint, save_checkpoint, Block, MindModel, RlStats};
use crate::task::Env;
use crate::world::GridLayouts;
use crate::SettingMode;
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RESUME_FILE: &str = "resume.bin";
pub const STATE_FILE: &str = "trainer_state.json";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub episode_length: usize,
    pub il_loss: f64,
    /// Mean per-tick squared mind change, whatever reward trained the learner.
    pub mean_probing_reward: f64,
    /// Mean learner-policy entropy (0 without a learner policy).
    pub entropy: f64,
    pub epsilon: f64,
    pub wall_time: f64,
}

/// Everything besides the model needed to continue a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    /// Completed iterations.
    pub iteration: u64,
    pub counts: CountTable,
    pub skipped_updates: u64,
}

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join(METRICS_FILE)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join(CHECKPOINT_DIR)
    }

    pub fn checkpoint(&self, iteration: u64) -> PathBuf {
        self.checkpoint_dir().join(format!("ckpt_{iteration:06}.bin"))
    }

    pub fn resume(&self) -> PathBuf {
        self.root.join(RESUME_FILE)
    }

    pub fn state(&self) -> PathBuf {
        self.root.join(STATE_FILE)
    }

    /// Checkpoints in iteration order.
    pub fn list_checkpoints(&self) -> std::io::Result<Vec<(u64, PathBuf)>> {
        let mut out = Vec::new();
        let dir = self.checkpoint_dir();
        if !dir.exists() {
            return Ok(out);
        }
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let iter = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("ckpt_"))
                .and_then(|s| s.parse::<u64>().ok());
            if let Some(i) = iter {
                out.push((i, path));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn final_checkpoint(&self) -> std::io::Result<Option<PathBuf>> {
        Ok(self.list_checkpoints()?.pop().map(|(_, p)| p))
    }
}

/// Independent random stream for one iteration, so a resumed run replays the
/// exact same episodes.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

pub struct Trainer {
    pub model: MindModel,
    pub config: TrainConfig,
    pub layouts: GridLayouts,
    pub state: TrainerState,
    started: Instant,
}

/// One imitation step on the demonstrator record of `traj`. Returns the loss.
pub fn il_update(
    model: &mut MindModel,
    optimizer: &RmsProp,
    traj: &mut Trajectory,
    iteration: u64,
) -> Result<f64, TrainError> {
    model.zero_grad(Block::Tracker);
    model.zero_grad(Block::Demonstrator);
    let loss = model.il_backward(&mut traj.il)?;
    if !loss.is_finite() {
        return Err(TrainError::NonFinite { what: "imitation loss", iteration });
    }
    if let Err(e) = optimizer.step(model.params_mut_of(&[Block::Tracker, Block::Demonstrator])) {
        warn!("iteration {iteration}: skipped imitation update: {e}");
    }
    Ok(loss)
}

/// One actor-critic step on the learner record of `traj`, with one reward per
/// learner step. The tracker and demonstrator branch are left untouched.
pub fn rl_update(
    model: &mut MindModel,
    optimizer: &RmsProp,
    traj: &mut Trajectory,
    step_rewards: &[f64],
    config: &TrainConfig,
    iteration: u64,
) -> Result<Option<RlStats>, TrainError> {
    if traj.rl.is_empty() {
        return Ok(None);
    }
    model.zero_grad(Block::Learner);
    model.zero_grad(Block::Value);
    let returns = discounted_returns(step_rewards, config.gamma);
    let stats = model.rl_backward(&mut traj.rl, &returns, config.entropy_weight)?;
    if !stats.policy_objective.is_finite() || !stats.value_loss.is_finite() {
        return Err(TrainError::NonFinite { what: "actor-critic loss", iteration });
    }
    if let Err(e) = optimizer.step(model.params_mut(Block::Learner)) {
        warn!("iteration {iteration}: skipped policy update: {e}");
    }
    if let Err(e) = optimizer.step(model.params_mut(Block::Value)) {
        warn!("iteration {iteration}: skipped value update: {e}");
    }
    Ok(Some(stats))
}

impl Trainer {
    pub fn new(model: MindModel, config: TrainConfig, layouts: GridLayouts) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        Ok(Trainer { model, config, layouts, state: TrainerState::default(), started: Instant::now() })
    }

    pub fn finished(&self) -> bool {
        self.state.iteration >= self.config.iterations
    }

    fn control(&self) -> LearnerControl<'static> {
        match self.config.reward_mode {
            RewardMode::Passive => LearnerControl::Absent,
            RewardMode::RandomProbe => LearnerControl::Uniform,
            _ => LearnerControl::Policy,
        }
    }

    /// Fresh training episode for iteration `i`.
    pub fn episode_env(&self, rng: &mut ChaCha8Rng) -> Result<Env, TrainError> {
        let env_seed: u64 = rng.random();
        let mut env = Env::reset(self.model.config.task, SettingMode::Train, env_seed, &self.layouts)?;
        if let Some(t) = self.config.t_max {
            env.set_t_max(t);
        }
        Ok(env)
    }

    /// Run one iteration: rollout, imitation update, then (for probing modes)
    /// the actor-critic update.
    pub fn step(&mut self) -> Result<MetricsRow, TrainError> {
        let i = self.state.iteration;
        let epsilon = self.config.epsilon(i);
        let optimizer = self.config.optimizer();
        let mut rng = iteration_rng(self.config.seed, i);
        let env = self.episode_env(&mut rng)?;
        let mut traj = rollout(&self.model, env, self.control(), epsilon, false, &mut rng);

        let mind_rewards = tick_mind_rewards(&traj.minds());
        let il_step_losses = traj.il.step_losses();
        let il_loss = il_update(&mut self.model, &optimizer, &mut traj, i)?;

        let entropy = if traj.rl.is_empty() { 0.0 } else { traj.rl.mean_entropy() };
        if self.config.reward_mode.trains_learner() {
            let tick_rewards = match self.config.reward_mode {
                RewardMode::MindChange => mind_rewards.clone(),
                RewardMode::SelfSupervised => il_step_losses,
                RewardMode::CountBased => {
                    let beta = self.config.count_beta;
                    traj.digests.iter().map(|&d| self.state.counts.visit(d, beta)).collect()
                }
                RewardMode::RandomProbe | RewardMode::Passive => unreachable!(),
            };
            let step_rewards = learner_step_rewards(&tick_rewards, &traj.learner_ticks);
            rl_update(&mut self.model, &optimizer, &mut traj, &step_rewards, &self.config, i)?;
        }

        self.state.iteration += 1;
        let mean_probing_reward =
            if mind_rewards.is_empty() { 0.0 } else { mind_rewards.iter().sum::<f64>() / mind_rewards.len() as f64 };
        Ok(MetricsRow {
            iteration: i,
            episode_length: traj.length,
            il_loss,
            mean_probing_reward,
            entropy,
            epsilon,
            wall_time: if self.config.wall_clock { self.started.elapsed().as_secs_f64() } else { 0.0 },
        })
    }

    /// Train to completion, persisting metrics, periodic checkpoints and the
    /// resume point under `paths` when given.
    pub fn train(&mut self, paths: Option<&RunPaths>) -> Result<Vec<MetricsRow>, TrainError> {
        let mut metrics = match paths {
            Some(p) => {
                fs::create_dir_all(p.checkpoint_dir())?;
                Some(OpenOptions::new().create(true).append(true).open(p.metrics())?)
            }
            None => None,
        };
        let mut rows = Vec::new();
        while !self.finished() {
            let row = self.step()?;
            if let Some(f) = metrics.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&row).expect("metrics serialize"))?;
            }
            let done = self.state.iteration;
            if done % self.config.checkpoint_interval == 0 || self.finished() {
                if let Some(p) = paths {
                    if let Some(f) = metrics.as_mut() {
                        f.flush()?;
                    }
                    self.save(p)?;
                }
                info!(
                    "iteration {done}/{}: il_loss {:.4}, probing reward {:.4}, length {}",
                    self.config.iterations, row.il_loss, row.mean_probing_reward, row.episode_length
                );
            }
            rows.push(row);
        }
        Ok(rows)
    }

    /// Write the checkpoint for the current iteration and the resume point.
    pub fn save(&self, paths: &RunPaths) -> Result<(), TrainError> {
        fs::create_dir_all(paths.checkpoint_dir())?;
        save_checkpoint(&self.model, false, &paths.checkpoint(self.state.iteration))?;
        save_checkpoint(&self.model, true, &paths.resume())?;
        let tmp = paths.state().with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(&self.state).expect("state serialize"))?;
        fs::rename(tmp, paths.state())?;
        Ok(())
    }

    /// Continue an interrupted run: restores the model with its optimizer
    /// state, the trainer state, and drops metrics rows written after the last
    /// resume point. Returns `None` when the directory holds no resume point.
    pub fn resume(
        paths: &RunPaths,
        config: TrainConfig,
        layouts: GridLayouts,
    ) -> Result<Option<Trainer>, TrainError> {
        if !paths.resume().exists() || !paths.state().exists() {
            return Ok(None);
        }
        let model = load_checkpoint(&paths.resume())?;
        let state: TrainerState = serde_json::from_str(&fs::read_to_string(paths.state())?)
            .map_err(|e| TrainError::State(e.to_string()))?;
        truncate_lines(&paths.metrics(), state.iteration as usize)?;
        let mut trainer = Trainer::new(model, config, layouts)?;
        trainer.state = state;
        Ok(Some(trainer))
    }
}

fn truncate_lines(path: &Path, keep: usize) -> Result<(), TrainError> {
    if !path.exists() {
        return Ok(());
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().take(keep).collect::<Result<_, _>>()?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
