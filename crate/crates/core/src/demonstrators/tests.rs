use super::*;
use crate::sorting::{SortState, TRAINING_ARRAY};
use crate::world::{reset_grid, BlockKind, GridAction, GridLayouts, GridTask, Pos};
use crate::SettingMode;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn passing() -> crate::world::GridWorldState {
    let mut s = reset_grid(GridTask::Passing, SettingMode::Train, 0, &GridLayouts::default()).unwrap();
    s.learner = None;
    s
}

#[test]
fn passing_below_gap_moves_north() {
    let mut s = passing();
    s.demonstrator = Pos::new(6, 1);
    assert_eq!(plan_grid_action(&s), GridAction::MoveN);
    assert_eq!(plan_distance(&s), Some(2));
}

#[test]
fn passing_sealed_wall_stops() {
    let mut s = passing();
    s.set_block(Pos::new(5, 1), Some(BlockKind::Wall));
    assert_eq!(plan(&s), None);
    assert_eq!(plan_grid_action(&s), GridAction::Stop);
}

#[test]
fn passing_training_route_prefers_north_then_west() {
    let s = passing();
    assert_eq!(plan(&s), Some(Plan { first: GridAction::MoveN, length: 13 }));
    // Rolling the planner forward gives N N N W×8 N N.
    let mut s = s;
    let mut trace = Vec::new();
    while !crate::world::goal_reached(&s) {
        let a = plan_grid_action(&s);
        trace.push(a.name());
        s = crate::world::step_grid(&s, a, None).0;
    }
    let expected: Vec<&str> =
        ["N", "N", "N"].into_iter().chain(["W"; 8]).chain(["N", "N"]).collect();
    assert_eq!(trace, expected);
}

#[test]
fn passing_learner_in_gap_blocks() {
    let mut s = passing();
    s.learner = Some(Pos::new(5, 1));
    assert_eq!(plan_grid_action(&s), GridAction::Stop);
}

#[test]
fn replanning_follows_a_new_gap() {
    let mut s = passing();
    assert_eq!(plan_distance(&s), Some(13));
    s.set_block(Pos::new(5, 9), None);
    assert_eq!(plan_distance(&s), Some(5));
    assert_eq!(plan_grid_action(&s), GridAction::MoveN);
}

#[test]
fn maze_demonstrator_fetches_the_key() {
    let layouts = GridLayouts::default();
    let mut s = reset_grid(GridTask::Maze, SettingMode::Train, 0, &layouts).unwrap();
    s.learner = None;
    let p = plan(&s).expect("training maze is solvable");
    assert!(p.length > 0);
    // Rolling out reaches the goal in exactly the planned number of steps.
    let mut steps = 0;
    while !crate::world::goal_reached(&s) {
        s = crate::world::step_grid(&s, plan_grid_action(&s), None).0;
        steps += 1;
        assert!(steps <= p.length);
    }
    assert_eq!(steps, p.length);
}

#[test]
fn construction_goal_carried_by_learner_is_infeasible() {
    let layouts = GridLayouts::default();
    let mut s = reset_grid(GridTask::Construction, SettingMode::Train, 1, &layouts).unwrap();
    let (a, _) = s.goal.unwrap().colors();
    let cell = s.cells.iter().position(|&c| c == Some(BlockKind::Colored(a))).unwrap();
    s.cells[cell] = None;
    s.learner_inventory = Some(BlockKind::Colored(a));
    assert_eq!(plan_grid_action(&s), GridAction::Stop);
}

#[test]
fn bubble_sort_trace_on_training_array() {
    let s = SortState::new(TRAINING_ARRAY);
    let (a, cur) = bubble_sort_action(&s);
    assert_eq!(a, crate::sorting::SortDemoAction::Swap(0, 1));
    assert_eq!(cur.0, 0);
    let mut s = s;
    s.cursor = cur;
    s.apply_demo(a);
    // Oracle: the first inversion at or after index 0 of [0,2,5,12,14,10,...] is 14 > 10 at i = 4.
    let oracle = (0..9).find(|&i| s.values[i] > s.values[i + 1]).unwrap();
    assert_eq!(oracle, 4);
    assert_eq!(bubble_sort_action(&s).0, crate::sorting::SortDemoAction::Swap(4, 5));
}

#[test]
fn bubble_sort_cursor_wraps() {
    let mut s = SortState::new([0, 1, 2, 3, 4, 5, 6, 7, 9, 8]);
    s.cursor = crate::sorting::BubbleSortCursor(8);
    assert_eq!(bubble_sort_action(&s).0, crate::sorting::SortDemoAction::Swap(8, 9));
    let mut s = SortState::new([1, 0, 2, 3, 4, 5, 6, 7, 8, 9]);
    s.cursor = crate::sorting::BubbleSortCursor(5);
    assert_eq!(bubble_sort_action(&s), (crate::sorting::SortDemoAction::Swap(0, 1), crate::sorting::BubbleSortCursor(0)));
}

#[test]
fn bubble_sort_noop_when_sorted() {
    let s = SortState::new([0, 0, 1, 2, 3, 5, 8, 13, 15, 15]);
    assert_eq!(bubble_sort_action(&s).0, crate::sorting::SortDemoAction::NoOp);
}

#[test]
fn noise_rate_zero_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        assert_eq!(with_action_noise(3usize, &[0, 1, 2, 3, 4], 0.0, &mut rng), (3, false));
    }
}

#[test]
fn noise_rate_one_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[with_action_noise(0usize, &[0, 1, 2, 3, 4], 1.0, &mut rng).0] += 1;
    }
    let expected = n as f64 / 5.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 18.47, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn noise_rate_tenth_replaces_a_tenth() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let replaced = (0..n).filter(|_| with_action_noise(0usize, &[0, 1, 2, 3, 4], 0.1, &mut rng).1).count();
    let freq = replaced as f64 / n as f64;
    assert!((freq - 0.1).abs() <= 0.01, "freq = {freq}");
}

proptest! {
    #[test]
    fn bubble_sort_never_swaps_ordered_pairs(values in prop::array::uniform10(0u8..16), cursor in 0usize..9) {
        let mut s = SortState::new(values);
        s.cursor = crate::sorting::BubbleSortCursor(cursor);
        if let crate::sorting::SortDemoAction::Swap(i, j) = bubble_sort_action(&s).0 {
            prop_assert_eq!(j, i + 1);
            prop_assert!(values[i] > values[j]);
        }
    }
}
