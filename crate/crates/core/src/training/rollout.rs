use crate::model::{IlTape, LearnerInput, MindModel, RlTape};
use crate::task::{ActionCode, Env};
use crate::world::{Observation, Viewpoint};
use rand::Rng;

/// How the learner slot is filled during a rollout.
pub enum LearnerControl<'a> {
    /// Sample from the learner branch, ε-greedy.
    Policy,
    /// Uniformly random actions.
    Uniform,
    /// Learner removed from the world.
    Absent,
    /// A fixed rule reading the environment.
    Scripted(&'a mut dyn FnMut(&Env) -> ActionCode),
}

/// Everything one episode produced.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Episode length `T` in ticks.
    pub length: usize,
    pub il: IlTape,
    /// Learner-branch steps; empty unless the learner was policy-driven.
    pub rl: RlTape,
    pub demo_actions: Vec<ActionCode>,
    pub learner_actions: Vec<ActionCode>,
    /// Tick index (0-based) of each learner action.
    pub learner_ticks: Vec<usize>,
    /// Whether each learner action came from the uniform ε branch.
    pub explored: Vec<bool>,
    /// World-state digest after each tick.
    pub digests: Vec<u64>,
    pub goal_reached: bool,
    /// Rendering of the world at the start of each tick, when requested.
    pub frames: Vec<String>,
}

impl Trajectory {
    /// `m^1..m^T`.
    pub fn minds(&self) -> Vec<Vec<f64>> {
        self.il.minds()
    }
}

fn learner_observation(model: &MindModel, env: &Env) -> Observation {
    let s_l = env.observe(Viewpoint::Learner);
    match model.config.learner_input {
        LearnerInput::Mind => s_l,
        LearnerInput::NoMind => s_l.concat_channels(&env.observe(Viewpoint::Demonstrator)),
    }
}

/// Run one episode from `env`. Each tick: the demonstrator observes and acts,
/// the learner (when scheduled) observes and acts, then the tracker consumes
/// the demonstrator's (state, action) pair to produce `m^t`.
pub fn rollout<R: Rng + ?Sized>(
    model: &MindModel,
    mut env: Env,
    mut control: LearnerControl<'_>,
    epsilon: f64,
    record_frames: bool,
    rng: &mut R,
) -> Trajectory {
    if matches!(control, LearnerControl::Absent) {
        env.remove_learner();
    }
    let task = env.task();
    let space = task.learner_space();
    let mut traj = Trajectory {
        length: 0,
        il: IlTape::new(),
        rl: RlTape::new(),
        demo_actions: Vec::new(),
        learner_actions: Vec::new(),
        learner_ticks: Vec::new(),
        explored: Vec::new(),
        digests: Vec::new(),
        goal_reached: false,
        frames: Vec::new(),
    };
    let mut m = model.initial_mind().0;
    let mut tracker_state = model.initial_state();
    let mut demo_state = model.initial_state();
    let mut learner_state = model.initial_state();
    loop {
        if record_frames {
            traj.frames.push(env.render());
        }
        let tick = traj.length;
        let s_d = env.observe(Viewpoint::Demonstrator);
        let a_d = env.planned_demo_action();
        let demo_step = model.demo.step(&s_d, &m, &demo_state);
        demo_state = demo_step.lstm.state();
        env.execute_demo(a_d);

        if env.learner_scheduled() {
            let a_l = match &mut control {
                LearnerControl::Policy => {
                    let s_l = learner_observation(model, &env);
                    let step = model.learner.step(&s_l, &m, &learner_state);
                    learner_state = step.lstm.state();
                    let value = model.value_forward(&learner_state);
                    let explore = epsilon > 0.0 && rng.random::<f64>() < epsilon;
                    let a = if explore { space.sample_uniform(rng) } else { step.dist.sample(rng) };
                    traj.explored.push(explore);
                    traj.rl.push(step, a, value);
                    a
                }
                LearnerControl::Uniform => {
                    traj.explored.push(true);
                    space.sample_uniform(rng)
                }
                LearnerControl::Scripted(f) => {
                    traj.explored.push(false);
                    f(&env)
                }
                LearnerControl::Absent => unreachable!("absent learner is never scheduled"),
            };
            env.execute_learner(a_l);
            traj.learner_actions.push(a_l);
            traj.learner_ticks.push(tick);
        }

        let tr = model.tracker.step(&s_d, a_d, &tracker_state);
        tracker_state = tr.lstm.state();
        m.clone_from(&tr.m);
        traj.il.push(demo_step, a_d, tr);
        traj.demo_actions.push(a_d);

        let done = env.end_tick();
        traj.length += 1;
        traj.digests.push(env.digest());
        if done {
            traj.goal_reached = env.goal_reached();
            break;
        }
    }
    traj
}
