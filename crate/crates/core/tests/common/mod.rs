//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use probe_core::world::{goal_reached, step_grid, GridWorldState};
use std::collections::{HashSet, VecDeque};

/// Brute-force breadth-first search over complete world states using the
/// environment's own step function (demonstrator alone, learner absent).
pub fn oracle_distance(start: &GridWorldState) -> Option<usize> {
    let mut root = start.clone();
    root.learner = None;
    root.step_count = 0;
    if goal_reached(&root) {
        return Some(0);
    }
    let actions = root.task.demonstrator_actions();
    let mut seen = HashSet::new();
    seen.insert(root.clone());
    let mut queue = VecDeque::from([(root, 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        for &a in actions {
            let (mut next, _) = step_grid(&s, a, None);
            next.step_count = 0;
            if goal_reached(&next) {
                return Some(d + 1);
            }
            if seen.insert(next.clone()) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}
