//! Rule-based demonstrators: a replanning breadth-first planner for the grid
//! tasks, the modified bubble sort, and an action-noise wrapper.

mod planner;

pub use planner::{plan, plan_distance, plan_grid_action, Plan};

use crate::sorting::{is_ascending, BubbleSortCursor, SortDemoAction, SortState, ARRAY_LEN};
use rand::Rng;

/// Modified bubble sort: scan from the persistent cursor, wrapping over the
/// `n - 1` adjacent pairs, and swap the first inversion found. The cursor is
/// left on the swapped pair.
pub fn bubble_sort_action(state: &SortState) -> (SortDemoAction, BubbleSortCursor) {
    let x = &state.values;
    let pairs = ARRAY_LEN - 1;
    if is_ascending(x) {
        return (SortDemoAction::NoOp, state.cursor);
    }
    let mut i = state.cursor.0 % pairs;
    for _ in 0..pairs {
        if x[i] > x[i + 1] {
            return (SortDemoAction::Swap(i, i + 1), BubbleSortCursor(i));
        }
        i = (i + 1) % pairs;
    }
    unreachable!("unsorted array without an adjacent inversion")
}

/// With probability `noise_rate` replace `action` by a uniform draw from
/// `action_set`. Returns the action and whether it was replaced.
pub fn with_action_noise<A: Copy, R: Rng + ?Sized>(
    action: A,
    action_set: &[A],
    noise_rate: f64,
    rng: &mut R,
) -> (A, bool) {
    debug_assert!((0.0..=1.0).contains(&noise_rate));
    if noise_rate > 0.0 && rng.random::<f64>() < noise_rate {
        (action_set[rng.random_range(0..action_set.len())], true)
    } else {
        (action, false)
    }
}

#[cfg(test)]
mod tests;
