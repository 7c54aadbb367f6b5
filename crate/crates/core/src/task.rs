//! Uniform view over the four tasks: action spaces, observations and the
//! two-phase tick used by rollouts.

use crate::demonstrators::{bubble_sort_action, plan_grid_action};
use crate::sorting::{
    self, encode_sort_observation, reset_sort, SortDemoAction, SortLearnerAction, SortState,
    ARRAY_LEN, BITS,
};
use crate::world::{
    self, encode_grid_observation, reset_grid, Agent, GridAction, GridLayouts, GridTask,
    GridWorldState, LayoutError, Observation, Viewpoint, GRID,
};
use crate::SettingMode;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Passing,
    Maze,
    Construction,
    Sorting,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Passing, Task::Maze, Task::Construction, Task::Sorting];

    pub fn grid(self) -> Option<GridTask> {
        match self {
            Task::Passing => Some(GridTask::Passing),
            Task::Maze => Some(GridTask::Maze),
            Task::Construction => Some(GridTask::Construction),
            Task::Sorting => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Passing => "passing",
            Task::Maze => "maze",
            Task::Construction => "construction",
            Task::Sorting => "sorting",
        }
    }

    pub fn demonstrator_space(self) -> ActionSpace {
        match self.grid() {
            Some(g) => ActionSpace::single(g.demonstrator_actions().len()),
            None => ActionSpace::factored(ARRAY_LEN + 1, ARRAY_LEN + 1),
        }
    }

    pub fn learner_space(self) -> ActionSpace {
        match self.grid() {
            Some(g) => ActionSpace::single(g.learner_actions().len()),
            None => ActionSpace::factored(ARRAY_LEN + 1, BITS),
        }
    }

    /// `(height, width, channels)` of either agent's observation.
    pub fn observation_shape(self, layouts: &GridLayouts) -> (usize, usize, usize) {
        match self.grid() {
            Some(g) => (GRID, GRID, g.block_kinds(layouts.construction.palette).len() + 1),
            None => (ARRAY_LEN, 1, BITS),
        }
    }

    pub fn t_max(self, layouts: &GridLayouts) -> u32 {
        match self.grid() {
            Some(g) => layouts.t_max(g),
            None => sorting::SORT_T_MAX,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

/// Sizes of the categorical heads of a (possibly factored) action space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSpace {
    pub heads: Vec<usize>,
}

impl ActionSpace {
    pub fn single(n: usize) -> Self {
        ActionSpace { heads: vec![n] }
    }

    pub fn factored(a: usize, b: usize) -> Self {
        ActionSpace { heads: vec![a, b] }
    }

    /// Number of joint actions.
    pub fn size(&self) -> usize {
        self.heads.iter().product()
    }

    /// Total one-hot width (sum over heads).
    pub fn one_hot_width(&self) -> usize {
        self.heads.iter().sum()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionCode {
        let first = rng.random_range(0..self.heads[0]);
        let second = self.heads.get(1).map_or(0, |&n| rng.random_range(0..n));
        ActionCode { first, second }
    }

    pub fn all(&self) -> Vec<ActionCode> {
        let second = self.heads.get(1).copied().unwrap_or(1);
        (0..self.heads[0])
            .flat_map(|first| (0..second).map(move |second| ActionCode { first, second }))
            .collect()
    }
}

/// Head indices of an action; `second` is zero for single-head spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionCode {
    pub first: usize,
    pub second: usize,
}

impl ActionCode {
    pub fn single(first: usize) -> Self {
        ActionCode { first, second: 0 }
    }

    pub fn part(&self, head: usize) -> usize {
        if head == 0 {
            self.first
        } else {
            self.second
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WorldState {
    Grid(GridWorldState),
    Sort(SortState),
}

/// One episode's world plus the tick protocol: the demonstrator acts first,
/// the learner (when scheduled) second, then the tick closes.
#[derive(Debug, Clone)]
pub struct Env {
    task: Task,
    state: WorldState,
    learner_present: bool,
}

impl Env {
    pub fn reset(
        task: Task,
        mode: SettingMode,
        seed: u64,
        layouts: &GridLayouts,
    ) -> Result<Env, LayoutError> {
        let state = match task.grid() {
            Some(g) => WorldState::Grid(reset_grid(g, mode, seed, layouts)?),
            None => WorldState::Sort(reset_sort(mode, seed)),
        };
        Ok(Env { task, state, learner_present: true })
    }

    pub fn from_state(task: Task, state: WorldState) -> Env {
        let learner_present = match &state {
            WorldState::Grid(g) => g.learner.is_some(),
            WorldState::Sort(_) => true,
        };
        Env { task, state, learner_present }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn remove_learner(&mut self) {
        self.learner_present = false;
        if let WorldState::Grid(g) = &mut self.state {
            g.learner = None;
            g.learner_inventory = None;
        }
    }

    pub fn has_learner(&self) -> bool {
        self.learner_present
    }

    pub fn observe(&self, viewpoint: Viewpoint) -> Observation {
        match &self.state {
            WorldState::Grid(g) => encode_grid_observation(g, viewpoint),
            WorldState::Sort(s) => encode_sort_observation(s),
        }
    }

    /// What the rule-based demonstrator would do now.
    pub fn planned_demo_action(&self) -> ActionCode {
        match &self.state {
            WorldState::Grid(g) => {
                let a = plan_grid_action(g);
                let idx = g.task.demonstrator_actions().iter().position(|&x| x == a).unwrap();
                ActionCode::single(idx)
            }
            WorldState::Sort(s) => {
                let (i, j) = bubble_sort_action(s).0.indices();
                ActionCode { first: i, second: j }
            }
        }
    }

    /// Execute a demonstrator action. For Sorting the bubble-sort cursor follows
    /// the demonstrator's own intent, whatever was executed.
    pub fn execute_demo(&mut self, code: ActionCode) {
        match &mut self.state {
            WorldState::Grid(g) => {
                let a = g.task.demonstrator_actions()[code.first];
                g.apply(Agent::Demonstrator, a);
            }
            WorldState::Sort(s) => {
                s.cursor = bubble_sort_action(s).1;
                s.apply_demo(SortDemoAction::from_indices(code.first, code.second));
            }
        }
    }

    pub fn learner_scheduled(&self) -> bool {
        self.learner_present
            && match &self.state {
                WorldState::Grid(_) => true,
                WorldState::Sort(s) => s.learner_scheduled(),
            }
    }

    pub fn execute_learner(&mut self, code: ActionCode) {
        match &mut self.state {
            WorldState::Grid(g) => g.apply(Agent::Learner, GridAction::ALL[code.first]),
            WorldState::Sort(s) => {
                s.apply_learner(SortLearnerAction::from_indices(code.first, code.second))
            }
        }
    }

    /// Close the tick; returns whether the episode is over.
    pub fn end_tick(&mut self) -> bool {
        match &mut self.state {
            WorldState::Grid(g) => g.end_tick(),
            WorldState::Sort(s) => s.end_tick(),
        }
    }

    pub fn goal_reached(&self) -> bool {
        match &self.state {
            WorldState::Grid(g) => world::goal_reached(g),
            WorldState::Sort(s) => s.is_sorted(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        match &self.state {
            WorldState::Grid(g) => g.is_terminal(),
            WorldState::Sort(s) => s.is_terminal(),
        }
    }

    pub fn step_count(&self) -> u32 {
        match &self.state {
            WorldState::Grid(g) => g.step_count,
            WorldState::Sort(s) => s.step_count,
        }
    }

    pub fn t_max(&self) -> u32 {
        match &self.state {
            WorldState::Grid(g) => g.rules.t_max,
            WorldState::Sort(s) => s.t_max,
        }
    }

    pub fn set_t_max(&mut self, t_max: u32) {
        match &mut self.state {
            WorldState::Grid(g) => g.rules.t_max = t_max,
            WorldState::Sort(s) => s.t_max = t_max,
        }
    }

    pub fn digest(&self) -> u64 {
        match &self.state {
            WorldState::Grid(g) => g.digest(),
            WorldState::Sort(s) => s.digest(),
        }
    }

    pub fn render(&self) -> String {
        match &self.state {
            WorldState::Grid(g) => g.render_ascii(),
            WorldState::Sort(s) => format!("{}\n", s.render()),
        }
    }

    pub fn describe_demo_action(&self, code: ActionCode) -> String {
        match &self.state {
            WorldState::Grid(g) => g.task.demonstrator_actions()[code.first].name().to_string(),
            WorldState::Sort(_) => match SortDemoAction::from_indices(code.first, code.second) {
                SortDemoAction::Swap(i, j) => format!("swap({i},{j})"),
                SortDemoAction::NoOp => "noop".to_string(),
            },
        }
    }

    pub fn describe_learner_action(&self, code: ActionCode) -> String {
        match &self.state {
            WorldState::Grid(_) => GridAction::ALL[code.first].name().to_string(),
            WorldState::Sort(_) => match SortLearnerAction::from_indices(code.first, code.second) {
                SortLearnerAction::FlipBit { idx, bit } => format!("flip({idx},{bit})"),
                SortLearnerAction::NoOp => "noop".to_string(),
            },
        }
    }
}
