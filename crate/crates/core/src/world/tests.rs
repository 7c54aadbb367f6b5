use super::*;
use crate::SettingMode;
use proptest::prelude::*;

fn layouts() -> GridLayouts {
    GridLayouts::default()
}

fn passing_train() -> GridWorldState {
    reset_grid(GridTask::Passing, SettingMode::Train, 0, &layouts()).unwrap()
}

#[test]
fn passing_training_layout_is_fixed() {
    let s = passing_train();
    let golden = include_str!("../../layouts/passing_train.txt");
    assert_eq!(s.render_ascii(), golden);
    for seed in [1, 2, 3] {
        let t = reset_grid(GridTask::Passing, SettingMode::Train, seed, &layouts()).unwrap();
        assert_eq!(t, s);
    }
    assert_eq!(s.block(Pos::new(5, 1)), None);
    assert_eq!(s.demonstrator, Pos::new(9, 9));
}

#[test]
fn golden_maze_and_construction_layouts() {
    let maze = reset_grid(GridTask::Maze, SettingMode::Train, 0, &layouts()).unwrap();
    assert_eq!(maze.render_ascii(), include_str!("../../layouts/maze_train_seed0.txt"));
    let cons = reset_grid(GridTask::Construction, SettingMode::Train, 0, &layouts()).unwrap();
    assert_eq!(cons.render_ascii(), include_str!("../../layouts/construction_train_seed0.txt"));
}

#[test]
fn test_layouts_are_seeded() {
    for task in [GridTask::Passing, GridTask::Maze, GridTask::Construction] {
        let a = reset_grid(task, SettingMode::Test, 17, &layouts()).unwrap();
        let b = reset_grid(task, SettingMode::Test, 17, &layouts()).unwrap();
        assert_eq!(a, b, "{task:?}");
    }
}

#[test]
fn construction_test_has_six_obstacles_and_a_goal() {
    for seed in 0..20 {
        let s = reset_grid(GridTask::Construction, SettingMode::Test, seed, &layouts()).unwrap();
        let interior_walls = (0..CELLS)
            .map(Pos::from_index)
            .filter(|p| !p.is_border() && s.block(*p) == Some(BlockKind::Wall))
            .count();
        assert_eq!(interior_walls, 6);
        let (a, b) = s.goal.unwrap().colors();
        assert_ne!(a, b);
        let present = |c| s.cells.iter().any(|&x| x == Some(BlockKind::Colored(c)));
        assert!(present(a) && present(b));
    }
}

#[test]
fn layouts_roundtrip_as_key_value_text() {
    let text = layouts().to_toml();
    assert!(text.contains("t_max = 15"));
    assert_eq!(GridLayouts::from_toml(&text).unwrap(), layouts());
    assert!(GridLayouts::from_toml("[passing]\nbogus = 1\n").is_err());
}

#[test]
fn passing_through_gap_is_terminal() {
    let mut s = passing_train();
    s.learner = None;
    s.demonstrator = Pos::new(6, 1);
    let (n, terminal) = step_grid(&s, GridAction::MoveN, None);
    assert_eq!(n.demonstrator, Pos::new(5, 1));
    assert!(!terminal);
    let (n, terminal) = step_grid(&n, GridAction::MoveN, None);
    assert!(goal_reached(&n));
    assert!(terminal);
}

#[test]
fn blocked_moves_are_noops() {
    let mut s = passing_train();
    s.learner = Some(Pos::new(4, 3));
    let (n, _) = step_grid(&s, GridAction::Stop, Some(GridAction::MoveS));
    assert_eq!(n.learner, Some(Pos::new(4, 3)));
    s.learner = Some(Pos::new(2, 1));
    let (n, _) = step_grid(&s, GridAction::Stop, Some(GridAction::MoveW));
    assert_eq!(n.learner, Some(Pos::new(2, 1)));
    // Agents block each other.
    s.demonstrator = Pos::new(6, 3);
    s.learner = Some(Pos::new(6, 4));
    let (n, _) = step_grid(&s, GridAction::MoveE, None);
    assert_eq!(n.demonstrator, Pos::new(6, 3));
}

#[test]
fn demonstrator_resolves_first() {
    let mut s = passing_train();
    s.demonstrator = Pos::new(6, 3);
    s.learner = Some(Pos::new(6, 5));
    // Both target (6,4): the demonstrator wins.
    let (n, _) = step_grid(&s, GridAction::MoveE, Some(GridAction::MoveW));
    assert_eq!(n.demonstrator, Pos::new(6, 4));
    assert_eq!(n.learner, Some(Pos::new(6, 5)));
}

#[test]
fn step_count_and_time_limit() {
    let mut s = passing_train();
    let mut terminal = false;
    for t in 1..=15 {
        let (n, term) = step_grid(&s, GridAction::Stop, Some(GridAction::Stop));
        assert_eq!(n.step_count, t);
        s = n;
        terminal = term;
    }
    assert!(terminal);
}

#[test]
fn pickup_then_putdown_restores_occupancy() {
    let mut s = passing_train();
    s.learner = Some(Pos::new(4, 4));
    let before = s.cells;
    let (n, _) = step_grid(&s, GridAction::Stop, Some(GridAction::PickUp));
    assert_eq!(n.learner_inventory, Some(BlockKind::Wall));
    assert_eq!(n.block(Pos::new(5, 4)), None);
    let (n, _) = step_grid(&n, GridAction::Stop, Some(GridAction::PutDown));
    // N neighbour (3,4) is free, so the wall goes there first.
    assert_eq!(n.block(Pos::new(3, 4)), Some(BlockKind::Wall));
    // From a cell whose only free neighbour is the hole, the block returns exactly.
    let mut s2 = s.clone();
    s2.learner = Some(Pos::new(4, 4));
    for p in [Pos::new(3, 4), Pos::new(4, 3), Pos::new(4, 5)] {
        s2.set_block(p, Some(BlockKind::Wall));
    }
    let occupied = s2.cells;
    let (n, _) = step_grid(&s2, GridAction::Stop, Some(GridAction::PickUp));
    let (n, _) = step_grid(&n, GridAction::Stop, Some(GridAction::PutDown));
    assert_eq!(n.cells, occupied);
    assert_ne!(before, occupied);
}

#[test]
fn border_walls_cannot_be_taken() {
    let mut s = passing_train();
    s.learner = Some(Pos::new(1, 1));
    s.set_block(Pos::new(2, 1), None);
    let (n, _) = step_grid(&s, GridAction::Stop, Some(GridAction::PickUp));
    assert_eq!(n.learner_inventory, None);
}

#[test]
fn maze_doors_need_matching_tool() {
    let mut s = reset_grid(GridTask::Maze, SettingMode::Train, 0, &layouts()).unwrap();
    s.learner = None;
    // Clear the region and stand next to the installed yellow door at (2,5).
    s.demonstrator = Pos::new(2, 6);
    s.demonstrator_inventory = Some(BlockKind::Hammer);
    let (n, _) = step_grid(&s, GridAction::PickUp, None);
    assert_eq!(n.block(Pos::new(2, 5)), Some(BlockKind::YellowDoor));
    s.demonstrator_inventory = Some(BlockKind::Key);
    let (n, _) = step_grid(&s, GridAction::PickUp, None);
    assert_eq!(n.block(Pos::new(2, 5)), None);
    assert_eq!(n.demonstrator_inventory, Some(BlockKind::Key));
    s.demonstrator_inventory = None;
    let (n, _) = step_grid(&s, GridAction::PickUp, None);
    assert_eq!(n.block(Pos::new(2, 5)), Some(BlockKind::YellowDoor));
}

#[test]
fn construction_goal_by_adjacent_putdown() {
    let mut s = reset_grid(GridTask::Construction, SettingMode::Train, 3, &layouts()).unwrap();
    s.learner = None;
    let (a, b) = s.goal.unwrap().colors();
    let cell_of = |s: &GridWorldState, c| {
        (0..CELLS).map(Pos::from_index).find(|&p| s.block(p) == Some(BlockKind::Colored(c))).unwrap()
    };
    let pb = cell_of(&s, b);
    let pa = cell_of(&s, a);
    s.set_block(pa, None);
    s.demonstrator_inventory = Some(BlockKind::Colored(a));
    // Stand two cells north of b; the put-down scan puts the block on (pb.row-1).
    s.demonstrator = Pos::new(pb.row - 2, pb.col);
    assert!(!goal_reached(&s));
    let (n, terminal) = step_grid(&s, GridAction::PutDown, None);
    assert!(!terminal);
    assert_eq!(n.block(Pos::new(pb.row - 3, pb.col)), Some(BlockKind::Colored(a)));
    s.demonstrator = Pos::new(pb.row - 1, pb.col - 1);
    // Scan order N, S, W, E: north is free, so place via a cell whose first free neighbour is adjacent to b.
    s.set_block(Pos::new(pb.row - 2, pb.col - 1), Some(BlockKind::Wall));
    let (n, terminal) = step_grid(&s, GridAction::PutDown, None);
    assert_eq!(n.block(Pos::new(pb.row, pb.col - 1)), Some(BlockKind::Colored(a)));
    assert!(terminal && goal_reached(&n));
}

#[test]
fn maze_goal_room() {
    let mut s = reset_grid(GridTask::Maze, SettingMode::Train, 0, &layouts()).unwrap();
    assert!(!goal_reached(&s));
    s.demonstrator = Pos::new(3, 2);
    assert!(goal_reached(&s));
}

#[test]
fn observation_shape_and_counts() {
    let s = passing_train();
    let obs = encode_grid_observation(&s, Viewpoint::Demonstrator);
    assert_eq!((obs.height, obs.width, obs.channels), (11, 11, 2));
    assert!(obs.data.iter().all(|&v| v == 0.0 || v == 1.0));
    let walls = s.cells.iter().filter(|c| c.is_some()).count();
    assert_eq!(obs.channel_sum(0) as usize, walls + 1);
    assert_eq!(obs.channel_sum(1), 1.0);
    assert_eq!(obs.get(9, 9, 1), 1.0);
    assert_eq!(obs.get(2, 5, 0), 1.0);

    let lo = encode_grid_observation(&s, Viewpoint::Learner);
    assert_eq!(lo.get(2, 5, 1), 1.0);
    assert_eq!(lo.get(9, 9, 0), 1.0);
}

/// Reference encoder walking the occupancy map cell by cell.
fn reference_channel_counts(s: &GridWorldState) -> Vec<usize> {
    let kinds = s.task.block_kinds(s.rules.palette);
    let mut counts = vec![0; kinds.len()];
    for r in 0..GRID {
        for c in 0..GRID {
            if let Some(b) = s.block(Pos::new(r, c)) {
                counts[kinds.iter().position(|&k| k == b).unwrap()] += 1;
            }
        }
    }
    if let Some(l) = s.learner {
        let _ = l;
        counts[0] += 1;
    }
    counts
}

#[test]
fn carried_items_leave_the_grid() {
    let mut s = reset_grid(GridTask::Maze, SettingMode::Train, 0, &layouts()).unwrap();
    let hammer = (0..CELLS).map(Pos::from_index).find(|&p| s.block(p) == Some(BlockKind::Hammer)).unwrap();
    s.set_block(hammer, None);
    s.learner_inventory = Some(BlockKind::Hammer);
    let obs = encode_grid_observation(&s, Viewpoint::Demonstrator);
    assert_eq!(obs.channel_sum(3), 1.0);
    assert_eq!(obs.channel_sum(4), 0.0);
    let expected = reference_channel_counts(&s);
    for (ch, &n) in expected.iter().enumerate() {
        assert_eq!(obs.channel_sum(ch) as usize, n, "channel {ch}");
    }
}

fn block_counts(s: &GridWorldState) -> Vec<(BlockKind, usize)> {
    let kinds = s.task.block_kinds(s.rules.palette);
    kinds
        .into_iter()
        .map(|k| {
            let on_grid = s.cells.iter().filter(|&&c| c == Some(k)).count();
            let held = [s.demonstrator_inventory, s.learner_inventory]
                .iter()
                .filter(|&&i| i == Some(k))
                .count();
            (k, on_grid + held)
        })
        .collect()
}

fn arb_action() -> impl Strategy<Value = GridAction> {
    prop::sample::select(GridAction::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamics_invariants(
        task_idx in 0usize..3,
        seed in 0u64..50,
        actions in prop::collection::vec((arb_action(), arb_action()), 1..40),
    ) {
        let task = [GridTask::Passing, GridTask::Maze, GridTask::Construction][task_idx];
        let mut s = reset_grid(task, SettingMode::Train, seed, &layouts()).unwrap();
        let counts = block_counts(&s);
        let doors = |s: &GridWorldState| s.cells.iter().filter(|c| matches!(c, Some(BlockKind::YellowDoor | BlockKind::BlueDoor))).count()
            + [s.demonstrator_inventory, s.learner_inventory].iter().filter(|c| matches!(c, Some(BlockKind::YellowDoor | BlockKind::BlueDoor))).count();
        let mut door_count = doors(&s);
        for (d, l) in actions {
            let d = if task.demonstrator_actions().contains(&d) { d } else { GridAction::Stop };
            let (n1, t1) = step_grid(&s, d, Some(l));
            let (n2, t2) = step_grid(&s, d, Some(l));
            prop_assert_eq!(&n1, &n2);
            prop_assert_eq!(t1, t2);
            prop_assert_eq!(n1.step_count, s.step_count + 1);
            prop_assert!(n1.learner != Some(n1.demonstrator));
            for p in [Some(n1.demonstrator), n1.learner].into_iter().flatten() {
                prop_assert!(n1.block(p).is_none());
            }
            if task == GridTask::Maze {
                let now = doors(&n1);
                prop_assert!(now <= door_count);
                door_count = now;
                let others: Vec<_> = block_counts(&n1).into_iter().filter(|(k, _)| !matches!(k, BlockKind::YellowDoor | BlockKind::BlueDoor)).collect();
                let before: Vec<_> = counts.iter().copied().filter(|(k, _)| !matches!(k, BlockKind::YellowDoor | BlockKind::BlueDoor)).collect();
                prop_assert_eq!(others, before);
            } else {
                prop_assert_eq!(block_counts(&n1), counts.clone());
            }
            s = n1;
            if t1 {
                prop_assert!(s.step_count <= s.rules.t_max);
                break;
            }
        }
    }
}
