//! Measurement harness: action-prediction accuracy in unseen settings, noise
//! robustness, distillation success, demonstrator success under probing, and
//! the ablation grid.

mod ablation;

pub use ablation::{run_ablation, write_ablation_csv, AblationCell, AblationGrid, AblationRow, ABLATION_HEADER};

use crate::demonstrators::with_action_noise;
use crate::model::MindModel;
use crate::task::{ActionCode, Env, Task, WorldState};
use crate::training::{rollout, LearnerControl};
use crate::world::{GridLayouts, LayoutError, Observation, Viewpoint};
use crate::SettingMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{self, Write};

/// A fixed list of test settings for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSuite {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub noise_rate: f64,
    /// Seed of the action-noise stream.
    pub noise_seed: u64,
    pub layouts: GridLayouts,
    /// Test for unseen settings; Train scores the training setting itself.
    pub setting: SettingMode,
}

impl EvalSuite {
    /// `count` Test-mode settings with seeds `first_seed..first_seed + count`.
    pub fn new(task: Task, count: usize, first_seed: u64) -> Self {
        EvalSuite {
            task,
            seeds: (first_seed..first_seed + count as u64).collect(),
            noise_rate: 0.0,
            noise_seed: 0,
            layouts: GridLayouts::default(),
            setting: SettingMode::Test,
        }
    }

    /// The standard suite: 100 settings.
    pub fn standard(task: Task) -> Self {
        EvalSuite::new(task, 100, 1_000_000)
    }

    /// `count` episodes in the training setting.
    pub fn training(task: Task, count: usize, first_seed: u64) -> Self {
        EvalSuite { setting: SettingMode::Train, ..EvalSuite::new(task, count, first_seed) }
    }

    pub fn with_noise(mut self, rate: f64) -> Self {
        self.noise_rate = rate;
        self
    }

    /// Fresh environment for one setting, learner removed.
    pub fn env(&self, seed: u64) -> Result<Env, LayoutError> {
        let mut env = Env::reset(self.task, self.setting, seed, &self.layouts)?;
        env.remove_learner();
        Ok(env)
    }

    /// Digest over the initial world of every setting, so runs can prove they
    /// used identical suites.
    pub fn digest(&self) -> Result<u64, LayoutError> {
        let mut h = crate::world::Fnv64::new();
        h.write(self.task.name().as_bytes());
        for &s in &self.seeds {
            h.write(&self.env(s)?.digest().to_le_bytes());
        }
        Ok(h.finish())
    }
}

/// Something that predicts the demonstrator's next action from the observed
/// prefix.
pub trait Predictor {
    fn reset(&mut self);
    fn predict(&mut self, env: &Env, s_d: &Observation) -> ActionCode;
    /// Consume the action that was actually executed.
    fn observe(&mut self, s_d: &Observation, executed: ActionCode);
}

/// Argmax of the demonstrator branch with the mind vector tracked from the
/// observed prefix. Never touches the learner branch or value head.
pub struct ModelPredictor<'a> {
    model: &'a MindModel,
    m: Vec<f64>,
    tracker: crate::model::RecurrentState,
    demo: crate::model::RecurrentState,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a MindModel) -> Self {
        ModelPredictor { model, m: model.initial_mind().0, tracker: model.initial_state(), demo: model.initial_state() }
    }

    pub fn mind(&self) -> &[f64] {
        &self.m
    }
}

impl Predictor for ModelPredictor<'_> {
    fn reset(&mut self) {
        *self = ModelPredictor::new(self.model);
    }

    fn predict(&mut self, _env: &Env, s_d: &Observation) -> ActionCode {
        let step = self.model.demo.step(s_d, &self.m, &self.demo);
        self.demo = step.lstm.state();
        step.dist.argmax()
    }

    fn observe(&mut self, s_d: &Observation, executed: ActionCode) {
        let step = self.model.tracker.step(s_d, executed, &self.tracker);
        self.tracker = step.lstm.state();
        self.m = step.m;
    }
}

/// The rule-based demonstrator itself (noiseless).
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn reset(&mut self) {}

    fn predict(&mut self, env: &Env, _s_d: &Observation) -> ActionCode {
        env.planned_demo_action()
    }

    fn observe(&mut self, _s_d: &Observation, _executed: ActionCode) {}
}

/// Uniform guesses over the demonstrator's action space.
pub struct RandomPredictor {
    rng: ChaCha8Rng,
}

impl RandomPredictor {
    pub fn new(seed: u64) -> Self {
        RandomPredictor { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Predictor for RandomPredictor {
    fn reset(&mut self) {}

    fn predict(&mut self, env: &Env, _s_d: &Observation) -> ActionCode {
        env.task().demonstrator_space().sample_uniform(&mut self.rng)
    }

    fn observe(&mut self, _s_d: &Observation, _executed: ActionCode) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingResult {
    pub seed: u64,
    pub steps: usize,
    pub correct: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub settings: Vec<SettingResult>,
}

impl EvalReport {
    /// Step-pooled accuracy over all settings.
    pub fn accuracy(&self) -> f64 {
        let steps: usize = self.settings.iter().map(|s| s.steps).sum();
        let correct: usize = self.settings.iter().map(|s| s.correct).sum();
        if steps == 0 {
            0.0
        } else {
            correct as f64 / steps as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.settings.is_empty() {
            return 0.0;
        }
        self.settings.iter().filter(|s| s.success).count() as f64 / self.settings.len() as f64
    }

    pub fn total_steps(&self) -> usize {
        self.settings.iter().map(|s| s.steps).sum()
    }

    /// One row per setting plus an aggregate row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "task,setting,steps,correct,accuracy,success")?;
        for s in &self.settings {
            let acc = if s.steps == 0 { 0.0 } else { s.correct as f64 / s.steps as f64 };
            writeln!(w, "{},{},{},{},{:.6},{}", self.task, s.seed, s.steps, s.correct, acc, u8::from(s.success))?;
        }
        let correct: usize = self.settings.iter().map(|s| s.correct).sum();
        writeln!(
            w,
            "{},all,{},{},{:.6},{:.6}",
            self.task,
            self.total_steps(),
            correct,
            self.accuracy(),
            self.success_rate()
        )
    }
}

/// Run the demonstrator alone in every setting and score the predictor's
/// argmax against the executed action (noisy when the suite has noise).
pub fn eval_prediction_accuracy(
    predictor: &mut dyn Predictor,
    suite: &EvalSuite,
) -> Result<EvalReport, LayoutError> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(suite.noise_seed);
    let actions = suite.task.demonstrator_space().all();
    let mut settings = Vec::with_capacity(suite.seeds.len());
    for &seed in &suite.seeds {
        let mut env = suite.env(seed)?;
        predictor.reset();
        let (mut steps, mut correct) = (0, 0);
        loop {
            let s_d = env.observe(Viewpoint::Demonstrator);
            let predicted = predictor.predict(&env, &s_d);
            let planned = env.planned_demo_action();
            let (executed, _) = with_action_noise(planned, &actions, suite.noise_rate, &mut noise_rng);
            steps += 1;
            correct += usize::from(predicted == executed);
            predictor.observe(&s_d, executed);
            env.execute_demo(executed);
            if env.end_tick() {
                break;
            }
        }
        settings.push(SettingResult { seed, steps, correct, success: env.goal_reached() });
    }
    Ok(EvalReport { task: suite.task, settings })
}

/// Accuracy with the suite's noise forced to `noise_rate`.
pub fn eval_noise_robustness(
    predictor: &mut dyn Predictor,
    suite: &EvalSuite,
    noise_rate: f64,
) -> Result<EvalReport, LayoutError> {
    eval_prediction_accuracy(predictor, &suite.clone().with_noise(noise_rate))
}

/// Let the predictor act as the demonstrator (argmax decoding, mind tracked
/// from its own prefix) and report goal success within the step limit. In
/// Construction the planner acts until the first block has been picked up,
/// then hands over.
pub fn eval_policy_success(actor: &mut dyn Predictor, suite: &EvalSuite) -> Result<EvalReport, LayoutError> {
    let mut settings = Vec::with_capacity(suite.seeds.len());
    for &seed in &suite.seeds {
        let mut env = suite.env(seed)?;
        actor.reset();
        let mut handed_over = suite.task != Task::Construction;
        let mut steps = 0;
        loop {
            if !handed_over {
                if let WorldState::Grid(g) = env.state() {
                    handed_over = g.demonstrator_inventory.is_some();
                }
            }
            let s_d = env.observe(Viewpoint::Demonstrator);
            let proposed = actor.predict(&env, &s_d);
            let action = if handed_over { proposed } else { env.planned_demo_action() };
            actor.observe(&s_d, action);
            env.execute_demo(action);
            steps += 1;
            if env.end_tick() {
                break;
            }
        }
        settings.push(SettingResult { seed, steps, correct: 0, success: env.goal_reached() });
    }
    Ok(EvalReport { task: suite.task, settings })
}

/// Distillation: the learned demonstrator policy acts on the test suite.
pub fn eval_distillation(model: &MindModel, suite: &EvalSuite) -> Result<EvalReport, LayoutError> {
    eval_policy_success(&mut ModelPredictor::new(model), suite)
}

/// Who occupies the learner slot while measuring demonstrator success.
pub enum ProbeLearner<'a> {
    /// Sample from a trained learner branch (no exploration noise).
    Model(&'a MindModel),
    Uniform,
    Absent,
    Scripted(&'a mut dyn FnMut(&Env) -> crate::task::ActionCode),
}

/// Fraction of `episodes` training-setting episodes in which the demonstrator
/// reaches its goal within the step limit while `learner` acts.
pub fn eval_demonstrator_success(
    task: Task,
    layouts: &GridLayouts,
    learner: ProbeLearner<'_>,
    episodes: usize,
    seed: u64,
) -> Result<f64, LayoutError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = learner;
    let shell;
    let model = match &learner {
        ProbeLearner::Model(m) => *m,
        _ => {
            let cfg = crate::model::ModelConfig { filters: 1, fc_dim: 1, lstm_dim: 1, ..crate::model::ModelConfig::desk(task, layouts, 1) };
            shell = MindModel::new(cfg, 0).expect("minimal model config is valid");
            &shell
        }
    };
    let mut successes = 0;
    for _ in 0..episodes {
        let env_seed: u64 = rng.random();
        let env = Env::reset(task, SettingMode::Train, env_seed, layouts)?;
        let control = match &mut learner {
            ProbeLearner::Model(_) => LearnerControl::Policy,
            ProbeLearner::Uniform => LearnerControl::Uniform,
            ProbeLearner::Absent => LearnerControl::Absent,
            ProbeLearner::Scripted(f) => LearnerControl::Scripted(&mut **f),
        };
        let traj = rollout(model, env, control, 0.0, false, &mut rng);
        successes += usize::from(traj.goal_reached);
    }
    Ok(successes as f64 / episodes.max(1) as f64)
}
