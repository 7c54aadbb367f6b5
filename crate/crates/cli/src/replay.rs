use probe_core::model::MindModel;
use probe_core::training::{probing_reward, rollout, LearnerControl};
use probe_core::world::{GridLayouts, LayoutError};
use probe_core::{Env, SettingMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

#[derive(Debug, Clone, Copy)]
pub enum LearnerKind {
    Policy,
    Random,
    Absent,
}

/// Step-by-step text rendering of one episode. Each frame shows the world at
/// the start of the tick, then one `step` line: the actions taken, `|m|`,
/// the probing reward `||m^t - m^{t-1}||^2` and the components of `m^t`.
pub fn trace(model: &MindModel, seed: u64, test: bool, learner: LearnerKind) -> Result<String, LayoutError> {
    let mode = if test { SettingMode::Test } else { SettingMode::Train };
    let layouts = GridLayouts::default();
    let env = Env::reset(model.config.task, mode, seed, &layouts)?;
    let describe = env.clone();
    let control = match learner {
        LearnerKind::Policy => LearnerControl::Policy,
        LearnerKind::Random => LearnerControl::Uniform,
        LearnerKind::Absent => LearnerControl::Absent,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = rollout(model, env, control, 0.0, true, &mut rng);
    let minds = traj.minds();

    let mut out = String::new();
    let _ = writeln!(
        out,
        "# task {} seed {seed} setting {} steps {} goal_reached {}",
        model.config.task,
        if test { "test" } else { "train" },
        traj.length,
        traj.goal_reached
    );
    let mut prev = vec![0.0; model.config.latent_dim];
    let mut learner_iter = traj.learner_ticks.iter().zip(&traj.learner_actions).peekable();
    for t in 0..traj.length {
        let _ = writeln!(out, "frame {t}");
        out.push_str(&traj.frames[t]);
        let learner = match learner_iter.peek() {
            Some(&(&tick, &a)) if tick == t => {
                learner_iter.next();
                describe.describe_learner_action(a)
            }
            _ => "-".to_string(),
        };
        let m = &minds[t];
        let reward = probing_reward(&prev, m).expect("equal dimensions");
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let comps: Vec<String> = m.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "step {t} demo {} learner {learner} m_norm {norm:.6} reward {reward:e} m {}",
            describe.describe_demo_action(traj.demo_actions[t]),
            comps.join(",")
        );
        prev.clone_from(m);
    }
    Ok(out)
}
