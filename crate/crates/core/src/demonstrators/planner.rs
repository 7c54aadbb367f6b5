//! Breadth-first planner for the grid demonstrator.
//!
//! Searches a compact composite state: demonstrator cell, held item and the
//! location of every block the demonstrator could ever move. Everything else
//! (walls, the learner) is frozen for the duration of one plan; the caller
//! replans every tick.

use crate::world::{goal_reached, BlockKind, GridAction, GridTask, GridWorldState, Pos, CELLS};
use std::collections::{HashSet, VecDeque};

const MAX_ITEMS: usize = 10;
const CARRIED: u8 = 254;
const GONE: u8 = 255;
const NOTHING: u8 = 255;
/// Upper bound on expanded nodes before a search is declared hopeless.
const NODE_BUDGET: usize = 2_000_000;

const SEARCH_ORDER: [GridAction; 6] = [
    GridAction::MoveN,
    GridAction::MoveS,
    GridAction::MoveW,
    GridAction::MoveE,
    GridAction::PickUp,
    GridAction::PutDown,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    pos: u8,
    held: u8,
    locs: [u8; MAX_ITEMS],
}

struct Problem<'a> {
    state: &'a GridWorldState,
    /// Grid with every movable item lifted out.
    fixed: [Option<BlockKind>; CELLS],
    kinds: Vec<BlockKind>,
    actions: &'a [GridAction],
    learner: Option<usize>,
}

/// First action and length of the chosen plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plan {
    pub first: GridAction,
    pub length: usize,
}

fn movable(task: GridTask, b: BlockKind) -> bool {
    match task {
        GridTask::Passing => false,
        GridTask::Maze => !matches!(b, BlockKind::Wall),
        GridTask::Construction => matches!(b, BlockKind::Colored(_)),
    }
}

impl<'a> Problem<'a> {
    fn new(state: &'a GridWorldState) -> (Self, Node) {
        let mut fixed = state.cells;
        let mut kinds = Vec::new();
        let mut locs = [GONE; MAX_ITEMS];
        let mut held = NOTHING;
        if let Some(b) = state.demonstrator_inventory {
            locs[0] = CARRIED;
            held = 0;
            kinds.push(b);
        }
        for (idx, cell) in fixed.iter_mut().enumerate() {
            if let Some(b) = *cell {
                if movable(state.task, b) && kinds.len() < MAX_ITEMS {
                    locs[kinds.len()] = idx as u8;
                    kinds.push(b);
                    *cell = None;
                }
            }
        }
        let problem = Problem {
            state,
            fixed,
            kinds,
            actions: state.task.demonstrator_actions(),
            learner: state.learner.map(Pos::index),
        };
        (problem, Node { pos: state.demonstrator.index() as u8, held, locs })
    }

    fn item_at(&self, node: &Node, cell: usize) -> Option<usize> {
        node.locs[..self.kinds.len()].iter().position(|&l| l as usize == cell)
    }

    fn free(&self, node: &Node, cell: usize) -> bool {
        self.fixed[cell].is_none() && Some(cell) != self.learner && self.item_at(node, cell).is_none()
    }

    fn held_kind(&self, node: &Node) -> Option<BlockKind> {
        (node.held != NOTHING).then(|| self.kinds[node.held as usize])
    }

    fn successor(&self, node: &Node, action: GridAction) -> Option<Node> {
        let pos = Pos::from_index(node.pos as usize);
        let mut next = *node;
        match action {
            GridAction::Stop => return None,
            GridAction::MoveN | GridAction::MoveS | GridAction::MoveW | GridAction::MoveE => {
                let t = pos.offset(action.delta()?)?;
                if !self.free(node, t.index()) {
                    return None;
                }
                next.pos = t.index() as u8;
            }
            GridAction::PickUp => {
                let holding = self.held_kind(node);
                let (cell, k) = pos.neighbours().find_map(|t| {
                    let k = self.item_at(node, t.index())?;
                    self.takeable(t, self.kinds[k], holding).then_some((t, k))
                })?;
                if holding.is_none() {
                    next.locs[k] = CARRIED;
                    next.held = k as u8;
                } else {
                    debug_assert!(self.state.is_gap_cell(cell));
                    next.locs[k] = GONE;
                }
            }
            GridAction::PutDown => {
                if node.held == NOTHING {
                    return None;
                }
                let t = pos.neighbours().find(|t| self.free(node, t.index()))?;
                next.locs[node.held as usize] = t.index() as u8;
                next.held = NOTHING;
            }
        }
        Some(next)
    }

    /// Mirrors the pick-up rules of the world for movable items.
    fn takeable(&self, cell: Pos, kind: BlockKind, holding: Option<BlockKind>) -> bool {
        match self.state.task {
            GridTask::Passing => false,
            GridTask::Construction => holding.is_none(),
            GridTask::Maze => match kind {
                BlockKind::YellowDoor | BlockKind::BlueDoor if self.state.is_gap_cell(cell) => {
                    let tool = if kind == BlockKind::YellowDoor {
                        BlockKind::Key
                    } else {
                        BlockKind::Hammer
                    };
                    holding == Some(tool)
                }
                _ => holding.is_none(),
            },
        }
    }

    fn is_goal(&self, node: &Node) -> bool {
        let rules = &self.state.rules;
        let pos = Pos::from_index(node.pos as usize);
        match self.state.task {
            GridTask::Passing => pos.row < rules.wall_row,
            GridTask::Maze => rules.goal_room.contains(pos),
            GridTask::Construction => {
                let Some(goal) = self.state.goal else { return false };
                let (a, b) = goal.colors();
                let cell_of = |c: u8| {
                    self.kinds
                        .iter()
                        .position(|&k| k == BlockKind::Colored(c))
                        .map(|k| node.locs[k])
                        .filter(|&l| l < CARRIED)
                };
                match (cell_of(a), cell_of(b)) {
                    (Some(x), Some(y)) => Pos::from_index(x as usize)
                        .neighbours()
                        .any(|n| n.index() == y as usize),
                    _ => false,
                }
            }
        }
    }

    /// Goal blocks that are out of the demonstrator's reach make the search pointless.
    fn obviously_infeasible(&self) -> bool {
        if self.state.task != GridTask::Construction {
            return false;
        }
        let Some(goal) = self.state.goal else { return true };
        let (a, b) = goal.colors();
        [a, b].iter().any(|&c| !self.kinds.contains(&BlockKind::Colored(c)))
    }
}

/// Lexicographically smallest shortest plan (actions ordered N < S < W < E <
/// PickUp < PutDown). `None` when the goal cannot be reached in the frozen world.
pub fn plan(state: &GridWorldState) -> Option<Plan> {
    if goal_reached(state) {
        return Some(Plan { first: GridAction::Stop, length: 0 });
    }
    let (problem, start) = Problem::new(state);
    if problem.obviously_infeasible() {
        return None;
    }
    let mut seen = HashSet::with_capacity(1024);
    seen.insert(start);
    let mut frontier = VecDeque::new();
    frontier.push_back((start, GridAction::Stop, 0usize));
    while let Some((node, first, depth)) = frontier.pop_front() {
        if seen.len() > NODE_BUDGET {
            log::warn!("planner node budget exhausted at depth {depth}");
            return None;
        }
        for &action in SEARCH_ORDER.iter().filter(|a| problem.actions.contains(a)) {
            let Some(child) = problem.successor(&node, action) else { continue };
            if !seen.insert(child) {
                continue;
            }
            let first = if depth == 0 { action } else { first };
            if problem.is_goal(&child) {
                return Some(Plan { first, length: depth + 1 });
            }
            frontier.push_back((child, first, depth + 1));
        }
    }
    None
}

/// The demonstrator's next action; `Stop` when no viable plan exists.
pub fn plan_grid_action(state: &GridWorldState) -> GridAction {
    plan(state).map_or(GridAction::Stop, |p| p.first)
}

/// Length of the shortest plan in the frozen world.
pub fn plan_distance(state: &GridWorldState) -> Option<usize> {
    plan(state).map(|p| p.length)
}
