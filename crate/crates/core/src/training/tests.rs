use super::*;
use crate::demonstrators::plan_grid_action;
use crate::model::{Block, Dense, MindModel, ModelConfig, Param};
use crate::task::{Env, Task};
use crate::world::{step_grid, GridLayouts, GridWorldState};
use crate::SettingMode;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn desk(task: Task) -> MindModel {
    MindModel::new(ModelConfig::desk(task, &GridLayouts::default(), 8), 1).unwrap()
}

#[test]
fn probing_reward_examples() {
    assert_eq!(probing_reward(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
    assert_eq!(probing_reward(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
    assert_eq!(probing_reward(&[1.0; 4], &[0.0; 4]).unwrap(), 4.0);
    assert_eq!(probing_reward(&[0.0; 2], &[0.0; 3]), Err(RewardError::DimensionMismatch(2, 3)));
}

#[test]
fn tick_rewards_start_from_zero_mind() {
    let r = tick_mind_rewards(&[vec![3.0, 4.0], vec![3.0, 4.0], vec![0.0, 4.0]]);
    assert_eq!(r, vec![25.0, 0.0, 9.0]);
}

#[test]
fn returns_are_geometric_sums() {
    let r = discounted_returns(&[1.0, 1.0, 1.0], 0.95);
    for (a, b) in r.iter().zip([2.8525, 1.95, 1.0]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn learner_credit_spans_until_next_action() {
    let ticks = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    assert_eq!(learner_step_rewards(&ticks, &[0, 1, 2, 3, 4, 5, 6]), ticks.to_vec());
    assert_eq!(learner_step_rewards(&ticks, &[4]), vec![5.0 + 6.0 + 7.0]);
    assert_eq!(learner_step_rewards(&ticks, &[1, 5]), vec![2.0 + 3.0 + 4.0 + 5.0, 6.0 + 7.0]);
}

#[test]
fn count_bonus_decays_with_visits() {
    let mut t = CountTable::default();
    assert_eq!(t.visit(42, 1.0), 1.0);
    t.visit(42, 1.0);
    t.visit(42, 1.0);
    assert_eq!(t.visit(42, 1.0), 0.5);
    assert_eq!(t.visit(7, 1.0), 1.0);
    let mut prev = f64::INFINITY;
    let mut u = CountTable::default();
    for _ in 0..50 {
        let r = u.visit(9, 1.0);
        assert!(r < prev);
        prev = r;
    }
}

fn param(grad: Vec<f64>) -> Param {
    let mut p = Param::new("p", vec![grad.len()], vec![1.0; grad.len()]);
    p.grad = grad;
    p
}

#[test]
fn rmsprop_closed_form_first_step() {
    let opt = RmsProp::default();
    let mut zero = param(vec![0.0; 4]);
    opt.step(vec![&mut zero]).unwrap();
    assert_eq!(zero.value, vec![1.0; 4]);

    let c = 0.3;
    let mut p = param(vec![c; 4]);
    opt.step(vec![&mut p]).unwrap();
    let expected = opt.learning_rate * c / (((1.0 - opt.decay) * c * c).sqrt() + opt.epsilon);
    for v in &p.value {
        assert!((1.0 - v - expected).abs() < 1e-15);
    }
    assert!(p.grad.iter().all(|&g| g == 0.0));
    let before = p.value[0];
    p.grad = vec![c; 4];
    opt.step(vec![&mut p]).unwrap();
    assert!(before - p.value[0] < expected);
}

#[test]
fn rmsprop_rejects_non_finite_gradients() {
    let opt = RmsProp::default();
    let mut a = param(vec![0.1, 0.2]);
    let mut b = param(vec![f64::NAN, 0.0]);
    let err = opt.step(vec![&mut a, &mut b]).unwrap_err();
    assert!(matches!(err, OptimError::NonFinite(_)));
    assert_eq!(a.value, vec![1.0, 1.0]);
    assert!(a.accum.is_empty() && b.accum.is_empty());
}

#[test]
fn rmsprop_clips_global_norm() {
    let opt = RmsProp { clip_norm: Some(1.0), ..RmsProp::default() };
    let mut p = param(vec![3.0, 4.0]);
    let info = opt.step(vec![&mut p]).unwrap();
    assert_eq!(info.grad_norm, 5.0);
    assert!(info.clipped);
    assert!((p.accum[0] - 0.01 * 0.36).abs() < 1e-15);
}

#[test]
fn epsilon_schedule_is_linear_and_non_increasing() {
    let cfg = TrainConfig { iterations: 11, ..TrainConfig::default() };
    assert_eq!(cfg.epsilon(0), 0.1);
    assert!((cfg.epsilon(10) - 0.01).abs() < 1e-15);
    for i in 0..11 {
        assert!((cfg.epsilon(i) - (0.1 - 0.09 * i as f64 / 10.0)).abs() < 1e-15);
        assert!(cfg.epsilon(i + 1) <= cfg.epsilon(i));
    }
}

#[test]
fn config_validation_rejects_bad_discount() {
    assert!(TrainConfig { gamma: 1.2, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { gamma: 0.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { epsilon_end: 0.5, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
    let cfg: Result<TrainConfig, _> = toml::from_str("iterations = 3\nbogus = 1\n");
    assert!(cfg.is_err());
}

fn passing_env() -> Env {
    Env::reset(Task::Passing, SettingMode::Train, 0, &GridLayouts::default()).unwrap()
}

#[test]
fn passive_rollout_matches_planner_trace() {
    let model = desk(Task::Passing);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = rollout(&model, passing_env(), LearnerControl::Absent, 0.1, true, &mut rng);
    assert!(traj.rl.is_empty() && traj.learner_actions.is_empty());

    // Planner-only simulation.
    let mut s: GridWorldState = match passing_env().state() {
        crate::task::WorldState::Grid(g) => g.clone(),
        _ => unreachable!(),
    };
    s.learner = None;
    let mut trace = Vec::new();
    loop {
        let a = plan_grid_action(&s);
        trace.push(a);
        let (n, done) = step_grid(&s, a, None);
        s = n;
        if done {
            break;
        }
    }
    let actions = crate::world::GridTask::Passing.demonstrator_actions();
    let got: Vec<_> = traj.demo_actions.iter().map(|c| actions[c.first]).collect();
    assert_eq!(got, trace);
    assert_eq!(traj.length, 13);
    assert_eq!(traj.minds().len(), traj.length);
    assert_eq!(traj.frames.len(), traj.length);
    assert!(traj.goal_reached);
}

#[test]
fn full_exploration_is_uniform() {
    let model = desk(Task::Passing);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 7];
    let mut n = 0;
    while n < 3500 {
        let traj = rollout(&model, passing_env(), LearnerControl::Policy, 1.0, false, &mut rng);
        assert!(traj.explored.iter().all(|&e| e));
        for a in &traj.learner_actions {
            counts[a.first] += 1;
            n += 1;
        }
    }
    let expected = n as f64 / 7.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 6 degrees of freedom.
    assert!(chi2 < 22.46, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn sorting_learner_acts_every_fifth_tick() {
    let model = desk(Task::Sorting);
    let env = Env::reset(Task::Sorting, SettingMode::Train, 0, &GridLayouts::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let traj = rollout(&model, env, LearnerControl::Policy, 0.0, false, &mut rng);
    for (k, &t) in traj.learner_ticks.iter().enumerate() {
        assert_eq!(t, 5 * k + 4);
    }
    assert_eq!(traj.rl.len(), traj.learner_ticks.len());
}

#[test]
fn uniform_policy_gives_log_action_count_loss() {
    let mut model = desk(Task::Passing);
    model.demo.head.w.value.iter_mut().for_each(|w| *w = 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = rollout(&model, passing_env(), LearnerControl::Absent, 0.0, false, &mut rng);
    for l in traj.il.step_losses() {
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn imitation_overfits_a_fixed_demonstration() {
    let mut model = desk(Task::Passing);
    let opt = RmsProp::default();
    let mut env = passing_env();
    env.set_t_max(5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss = f64::INFINITY;
    for i in 0..200 {
        let mut traj = rollout(&model, env.clone(), LearnerControl::Absent, 0.0, false, &mut rng);
        assert_eq!(traj.length, 5);
        loss = il_update(&mut model, &opt, &mut traj, i).unwrap();
    }
    assert!(loss < 0.05, "loss after 200 updates: {loss}");
}

#[test]
fn updates_touch_only_their_blocks() {
    let mut model = desk(Task::Passing);
    let cfg = TrainConfig::default();
    let opt = cfg.optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let snapshot = |m: &MindModel, b: Block| -> Vec<u64> {
        m.params(b).iter().flat_map(|p| p.value.iter().map(|v| v.to_bits())).collect()
    };
    let mut traj = rollout(&model, passing_env(), LearnerControl::Policy, 0.5, false, &mut rng);
    let (l0, v0, m0, d0) = (
        snapshot(&model, Block::Learner),
        snapshot(&model, Block::Value),
        snapshot(&model, Block::Tracker),
        snapshot(&model, Block::Demonstrator),
    );
    il_update(&mut model, &opt, &mut traj, 0).unwrap();
    assert_eq!(snapshot(&model, Block::Learner), l0);
    assert_eq!(snapshot(&model, Block::Value), v0);
    let m1 = snapshot(&model, Block::Tracker);
    assert_ne!(m1, m0);
    assert_ne!(snapshot(&model, Block::Demonstrator), d0);
    let d1 = snapshot(&model, Block::Demonstrator);

    let rewards = vec![1.0; traj.rl.len()];
    rl_update(&mut model, &opt, &mut traj, &rewards, &cfg, 0).unwrap().unwrap();
    assert_eq!(snapshot(&model, Block::Tracker), m1);
    assert_eq!(snapshot(&model, Block::Demonstrator), d1);
    assert_ne!(snapshot(&model, Block::Learner), l0);
    assert!(model.params(Block::Tracker).iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
}

#[test]
fn value_head_reaches_geometric_fixed_point() {
    // Constant reward stream r = 1: V is trained toward r + γ V.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut head = Dense::new("value.fc", 4, 1, &mut rng);
    let h = [0.3, -0.2, 0.5, 0.1];
    let gamma = 0.95;
    let opt = RmsProp { learning_rate: 0.01, ..RmsProp::default() };
    for _ in 0..20_000 {
        let v = head.forward(&h)[0];
        let target = 1.0 + gamma * v;
        head.backward_batch(&h, &[v - target], 1, false);
        opt.step(head.params_mut().into_iter().collect()).unwrap();
    }
    let v = head.forward(&h)[0];
    assert!((v - 20.0).abs() / 20.0 < 0.05, "V = {v}");
}

fn small_config(mode: RewardMode, iterations: u64) -> TrainConfig {
    TrainConfig { iterations, reward_mode: mode, checkpoint_interval: 2, seed: 9, ..TrainConfig::default() }
}

#[test]
fn single_iteration_run_emits_one_row_and_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let mut t = Trainer::new(desk(Task::Passing), small_config(RewardMode::MindChange, 1), GridLayouts::default())
        .unwrap();
    let rows = t.train(Some(&paths)).unwrap();
    assert_eq!(rows.len(), 1);
    let text = std::fs::read_to_string(paths.metrics()).unwrap();
    assert_eq!(text.lines().count(), 1);
    let row: MetricsRow = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(row, rows[0]);
    assert_eq!(paths.list_checkpoints().unwrap().len(), 1);
    assert!(paths.resume().exists());
}

#[test]
fn passive_run_never_allocates_learner_optimizer_state() {
    let mut t = Trainer::new(desk(Task::Passing), small_config(RewardMode::Passive, 3), GridLayouts::default())
        .unwrap();
    let rows = t.train(None).unwrap();
    assert!(rows.iter().all(|r| r.entropy == 0.0));
    for b in [Block::Learner, Block::Value] {
        assert!(t.model.params(b).iter().all(|p| p.accum.is_empty()));
    }
    assert!(t.model.params(Block::Tracker).iter().all(|p| !p.accum.is_empty()));
}

#[test]
fn every_mode_trains() {
    for mode in RewardMode::ALL {
        for task in [Task::Sorting, Task::Maze] {
            let mut t = Trainer::new(desk(task), small_config(mode, 2), GridLayouts::default()).unwrap();
            let rows = t.train(None).unwrap();
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|r| r.il_loss.is_finite() && r.episode_length > 0));
        }
    }
}

#[test]
fn count_table_persists_across_iterations() {
    let mut t = Trainer::new(desk(Task::Passing), small_config(RewardMode::CountBased, 3), GridLayouts::default())
        .unwrap();
    t.train(None).unwrap();
    let total: u64 = t.state.counts.counts.values().sum();
    assert!(total >= 3);
}

#[test]
fn identical_seeds_give_identical_metrics_and_resume_is_exact() {
    let run = |dir: &std::path::Path| {
        let paths = RunPaths::new(dir);
        let mut t = Trainer::new(desk(Task::Passing), small_config(RewardMode::MindChange, 5), GridLayouts::default())
            .unwrap();
        t.train(Some(&paths)).unwrap();
        (std::fs::read(paths.metrics()).unwrap(), std::fs::read(paths.resume()).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, ca) = run(a.path());
    let (mb, cb) = run(b.path());
    assert_eq!(ma, mb);
    assert_eq!(ca, cb);

    // Interrupt after 3 iterations (last resume point at 2), then resume.
    let c = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(c.path());
    let mut t = Trainer::new(desk(Task::Passing), small_config(RewardMode::MindChange, 5), GridLayouts::default())
        .unwrap();
    std::fs::create_dir_all(paths.checkpoint_dir()).unwrap();
    let mut lines = String::new();
    for _ in 0..3 {
        let row = t.step().unwrap();
        lines.push_str(&serde_json::to_string(&row).unwrap());
        lines.push('\n');
        if t.state.iteration == 2 {
            t.save(&paths).unwrap();
        }
    }
    std::fs::write(paths.metrics(), lines).unwrap();
    let mut resumed =
        Trainer::resume(&paths, small_config(RewardMode::MindChange, 5), GridLayouts::default()).unwrap().unwrap();
    assert_eq!(resumed.state.iteration, 2);
    resumed.train(Some(&paths)).unwrap();
    assert_eq!(std::fs::read(paths.metrics()).unwrap(), ma);
    assert_eq!(std::fs::read(paths.resume()).unwrap(), ca);
}

proptest! {
    #[test]
    fn returns_satisfy_the_recursion(rewards in prop::collection::vec(-5.0f64..5.0, 1..40), gamma in 0.01f64..0.99) {
        let r = discounted_returns(&rewards, gamma);
        for t in 0..rewards.len() {
            let next = r.get(t + 1).copied().unwrap_or(0.0);
            prop_assert!((r[t] - (rewards[t] + gamma * next)).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_is_squared_distance(a in prop::collection::vec(-10.0f64..10.0, 8), b in prop::collection::vec(-10.0f64..10.0, 8)) {
        let oracle: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!((probing_reward(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }
}
