//! Collaboration and competition on Construction: task rewards, retraining the
//! learner policy on a frozen behaviour tracker, and the no-mind baseline.

use crate::model::{LearnerInput, MindModel, ModelConfig, ModelError, PolicyDistribution, RecurrentState};
use crate::task::{Env, Task, WorldState};
use crate::training::{iteration_rng, learner_step_rewards, rl_update, rollout, LearnerControl, TrainConfig, TrainError};
use crate::world::{BlockKind, GridLayouts, GridWorldState, Observation, Pos, CELLS};
use crate::SettingMode;
use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

pub const STEP_REWARD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRewardMode {
    /// −0.05 per demonstrator step, +1 when the goal is reached.
    Collaborate,
    /// +0.05 per step, −1 when the opponent reaches its goal.
    Compete,
}

impl TaskRewardMode {
    pub fn name(self) -> &'static str {
        match self {
            TaskRewardMode::Collaborate => "collaborate",
            TaskRewardMode::Compete => "compete",
        }
    }
}

impl fmt::Display for TaskRewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskRewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "collaborate" | "collab" => Ok(TaskRewardMode::Collaborate),
            "compete" => Ok(TaskRewardMode::Compete),
            _ => Err(format!("unknown task reward mode '{s}'")),
        }
    }
}

/// Reward of one tick. `goal_reached` is true only on the tick the goal is
/// first reached, so the terminal component is paid once.
pub fn task_reward(mode: TaskRewardMode, goal_reached: bool) -> f64 {
    match (mode, goal_reached) {
        (TaskRewardMode::Collaborate, false) => -STEP_REWARD,
        (TaskRewardMode::Collaborate, true) => 1.0 - STEP_REWARD,
        (TaskRewardMode::Compete, false) => STEP_REWARD,
        (TaskRewardMode::Compete, true) => STEP_REWARD - 1.0,
    }
}

/// Per-tick rewards of an episode of `length` ticks that ended with the goal
/// reached (on its last tick) or not.
pub fn episode_rewards(mode: TaskRewardMode, length: usize, goal_reached: bool) -> Vec<f64> {
    (0..length).map(|t| task_reward(mode, goal_reached && t + 1 == length)).collect()
}

pub fn episode_return(mode: TaskRewardMode, length: usize, goal_reached: bool) -> f64 {
    episode_rewards(mode, length, goal_reached).iter().sum()
}

fn manhattan(a: Pos, b: Pos) -> usize {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
}

/// Lower bound on the ticks any joint plan needs to reach the Construction
/// goal. One of the two goal blocks has to be picked up and put down again,
/// so some agent must first stand next to it; walls are ignored.
pub fn joint_steps_lower_bound(state: &GridWorldState) -> Option<usize> {
    let (a, b) = state.goal?.colors();
    if crate::world::goal_reached(state) {
        return Some(0);
    }
    let blocks: Vec<Pos> = (0..CELLS)
        .map(Pos::from_index)
        .filter(|&p| matches!(state.block(p), Some(BlockKind::Colored(c)) if c == a || c == b))
        .collect();
    let mut agents = vec![(state.demonstrator, state.demonstrator_inventory)];
    if let Some(l) = state.learner {
        agents.push((l, state.learner_inventory));
    }
    agents
        .iter()
        .flat_map(|&(pos, held)| {
            let carrying = matches!(held, Some(BlockKind::Colored(c)) if c == a || c == b);
            // Already holding a goal block: only the put-down remains.
            let own = carrying.then_some(1);
            let reach = blocks.iter().map(move |&x| x.neighbours().map(|n| manhattan(pos, n)).min().unwrap_or(0) + 2);
            own.into_iter().chain(reach)
        })
        .min()
}

/// Largest achievable episode return for the episode starting at `env`.
pub fn max_return(mode: TaskRewardMode, env: &Env) -> f64 {
    match mode {
        TaskRewardMode::Collaborate => {
            let WorldState::Grid(g) = env.state() else { return 1.0 };
            let k = joint_steps_lower_bound(g).unwrap_or(1).max(1);
            1.0 - STEP_REWARD * k as f64
        }
        TaskRewardMode::Compete => STEP_REWARD * env.t_max() as f64,
    }
}

/// Return divided by the episode's theoretical maximum.
pub fn rescale(mode: TaskRewardMode, episode_return: f64, env: &Env) -> f64 {
    episode_return / max_return(mode, env)
}

/// Return when the demonstrator acts alone.
pub fn demonstrator_only_return(mode: TaskRewardMode, env: &Env) -> f64 {
    let mut env = env.clone();
    env.remove_learner();
    let mut length = 0;
    loop {
        let a = env.planned_demo_action();
        env.execute_demo(a);
        length += 1;
        if env.end_tick() {
            break;
        }
    }
    episode_return(mode, length, env.goal_reached())
}

/// Learner-branch forward of a model trained without agent modeling: the
/// learner consumes both observations stacked along channels and never sees
/// the tracker.
pub fn no_mind_policy_forward(
    model: &MindModel,
    s_l: &Observation,
    s_d: &Observation,
    prev: &RecurrentState,
) -> Result<(PolicyDistribution, RecurrentState), ModelError> {
    if model.config.learner_input != LearnerInput::NoMind {
        return Err(ModelError::Config("model was built with a mind-fused learner".into()));
    }
    let step = model.learner.step(&s_l.concat_channels(s_d), &[], prev);
    let state = step.lstm.state();
    Ok((step.dist, state))
}

/// Which learner the transfer task trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferPolicy {
    /// Fused with the frozen tracker's mind vector.
    Mind,
    /// Sees both raw observations, no tracker.
    NoMind,
}

/// One point of a transfer learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    pub episode_length: usize,
    pub goal_reached: bool,
    pub episode_return: f64,
    pub rescaled_return: f64,
    pub demonstrator_only: f64,
}

pub const CURVE_HEADER: &str = "iteration,episode_length,goal_reached,return,rescaled_return,demonstrator_only_rescaled";

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6}",
            p.iteration,
            p.episode_length,
            u8::from(p.goal_reached),
            p.episode_return,
            p.rescaled_return,
            p.demonstrator_only
        )?;
    }
    Ok(())
}

/// Mean rescaled return over the last `fraction` of the curve.
pub fn final_mean(points: &[CurvePoint], fraction: f64) -> f64 {
    if points.is_empty() {
        return f64::NAN;
    }
    let n = ((points.len() as f64 * fraction).ceil() as usize).clamp(1, points.len());
    points[points.len() - n..].iter().map(|p| p.rescaled_return).sum::<f64>() / n as f64
}

/// Build the model to be retrained: tracker and demonstrator branch copied
/// from `pretrained`, learner branch and value head freshly initialised from
/// `seed`.
pub fn transfer_model(pretrained: &MindModel, policy: TransferPolicy, seed: u64) -> Result<MindModel, ModelError> {
    let learner_input = match policy {
        TransferPolicy::Mind => LearnerInput::Mind,
        TransferPolicy::NoMind => LearnerInput::NoMind,
    };
    let config = ModelConfig { learner_input, ..pretrained.config.clone() };
    let mut model = MindModel::new(config, seed)?;
    model.tracker = pretrained.tracker.clone();
    model.demo = pretrained.demo.clone();
    Ok(model)
}

/// Train the learner branch and value head of `model` with the task reward
/// on Construction training settings. The tracker and demonstrator branch are
/// only run forward. Returns the learning curve.
pub fn retrain_with_fixed_tracker(
    model: &mut MindModel,
    mode: TaskRewardMode,
    config: &TrainConfig,
    layouts: &GridLayouts,
) -> Result<Vec<CurvePoint>, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if model.config.task != Task::Construction {
        return Err(TrainError::Config(format!("transfer tasks run on construction, not {}", model.config.task)));
    }
    let optimizer = config.optimizer();
    let mut curve = Vec::with_capacity(config.iterations as usize);
    for i in 0..config.iterations {
        let mut rng = iteration_rng(config.seed, i);
        let env_seed: u64 = rng.random();
        let mut env = Env::reset(Task::Construction, SettingMode::Train, env_seed, layouts)?;
        if let Some(t) = config.t_max {
            env.set_t_max(t);
        }
        let r_max = max_return(mode, &env);
        let reference = demonstrator_only_return(mode, &env) / r_max;
        let mut traj = rollout(model, env, LearnerControl::Policy, config.epsilon(i), false, &mut rng);
        let ticks = episode_rewards(mode, traj.length, traj.goal_reached);
        let total: f64 = ticks.iter().sum();
        let step_rewards = learner_step_rewards(&ticks, &traj.learner_ticks);
        rl_update(model, &optimizer, &mut traj, &step_rewards, config, i)?;
        curve.push(CurvePoint {
            iteration: i,
            episode_length: traj.length,
            goal_reached: traj.goal_reached,
            episode_return: total,
            rescaled_return: total / r_max,
            demonstrator_only: reference,
        });
        if (i + 1) % config.checkpoint_interval == 0 {
            info!("{mode} iteration {}: rescaled return {:.3}", i + 1, final_mean(&curve, 0.1));
        }
    }
    Ok(curve)
}
