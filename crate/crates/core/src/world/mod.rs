//! Deterministic 11×11 grid worlds for the Passing, Maze and Construction tasks.
//!
//! Cells hold at most one block; agents stand on empty cells only. Items are
//! picked up from, and put down onto, one of the four neighbouring cells.

mod layout;

pub use layout::{
    reset_grid, ConstructionLayout, GridLayouts, LayoutError, MazeLayout, PassingLayout,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Side length of every grid world.
pub const GRID: usize = 11;
/// Number of cells in a grid world.
pub const CELLS: usize = GRID * GRID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridTask {
    Passing,
    Maze,
    Construction,
}

impl GridTask {
    /// Ordered block kinds; the position in this list is the observation channel.
    pub fn block_kinds(self, palette: u8) -> Vec<BlockKind> {
        match self {
            GridTask::Passing => vec![BlockKind::Wall],
            GridTask::Maze => vec![
                BlockKind::Wall,
                BlockKind::YellowDoor,
                BlockKind::BlueDoor,
                BlockKind::Key,
                BlockKind::Hammer,
            ],
            GridTask::Construction => std::iter::once(BlockKind::Wall)
                .chain((0..palette).map(BlockKind::Colored))
                .collect(),
        }
    }

    pub fn demonstrator_actions(self) -> &'static [GridAction] {
        match self {
            GridTask::Passing => &GridAction::PASSING_DEMONSTRATOR,
            _ => &GridAction::ALL,
        }
    }

    pub fn learner_actions(self) -> &'static [GridAction] {
        &GridAction::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    Wall,
    YellowDoor,
    BlueDoor,
    Key,
    Hammer,
    Colored(u8),
}

impl BlockKind {
    fn glyph(self) -> char {
        match self {
            BlockKind::Wall => '#',
            BlockKind::YellowDoor => 'Y',
            BlockKind::BlueDoor => 'B',
            BlockKind::Key => 'k',
            BlockKind::Hammer => 'h',
            BlockKind::Colored(c) => (b'0' + c) as char,
        }
    }

    fn is_door(self) -> bool {
        matches!(self, BlockKind::YellowDoor | BlockKind::BlueDoor)
    }

    /// The tool that opens an installed door of this kind.
    fn opened_by(self) -> Option<BlockKind> {
        match self {
            BlockKind::YellowDoor => Some(BlockKind::Key),
            BlockKind::BlueDoor => Some(BlockKind::Hammer),
            _ => None,
        }
    }
}

/// Agent actions. The derive order is the planner's tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GridAction {
    MoveN,
    MoveS,
    MoveW,
    MoveE,
    PickUp,
    PutDown,
    Stop,
}

impl GridAction {
    pub const ALL: [GridAction; 7] = [
        GridAction::MoveN,
        GridAction::MoveS,
        GridAction::MoveW,
        GridAction::MoveE,
        GridAction::PickUp,
        GridAction::PutDown,
        GridAction::Stop,
    ];
    pub const PASSING_DEMONSTRATOR: [GridAction; 5] = [
        GridAction::MoveN,
        GridAction::MoveS,
        GridAction::MoveW,
        GridAction::MoveE,
        GridAction::Stop,
    ];

    pub fn delta(self) -> Option<(isize, isize)> {
        match self {
            GridAction::MoveN => Some((-1, 0)),
            GridAction::MoveS => Some((1, 0)),
            GridAction::MoveW => Some((0, -1)),
            GridAction::MoveE => Some((0, 1)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAction::MoveN => "N",
            GridAction::MoveS => "S",
            GridAction::MoveW => "W",
            GridAction::MoveE => "E",
            GridAction::PickUp => "pick",
            GridAction::PutDown => "put",
            GridAction::Stop => "stop",
        }
    }
}

/// Neighbour scan order for pick-up and put-down targets: N, S, W, E.
const NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    pub fn index(self) -> usize {
        self.row * GRID + self.col
    }

    pub fn from_index(idx: usize) -> Self {
        Pos::new(idx / GRID, idx % GRID)
    }

    pub fn offset(self, (dr, dc): (isize, isize)) -> Option<Pos> {
        let r = self.row as isize + dr;
        let c = self.col as isize + dc;
        if (0..GRID as isize).contains(&r) && (0..GRID as isize).contains(&c) {
            Some(Pos::new(r as usize, c as usize))
        } else {
            None
        }
    }

    pub fn neighbours(self) -> impl Iterator<Item = Pos> {
        NEIGHBOURS.iter().filter_map(move |&d| self.offset(d))
    }

    pub fn is_border(self) -> bool {
        self.row == 0 || self.col == 0 || self.row == GRID - 1 || self.col == GRID - 1
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Inclusive rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub const fn new(top: usize, left: usize, bottom: usize, right: usize) -> Self {
        Rect { top, left, bottom, right }
    }

    pub fn contains(&self, p: Pos) -> bool {
        (self.top..=self.bottom).contains(&p.row) && (self.left..=self.right).contains(&p.col)
    }

    pub fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (self.top..=self.bottom)
            .flat_map(move |r| (self.left..=self.right).map(move |c| Pos::new(r, c)))
    }
}

/// Unordered pair of distinct colours the Construction demonstrator must join.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstructionGoal {
    colors: (u8, u8),
}

impl ConstructionGoal {
    pub fn new(a: u8, b: u8) -> Option<Self> {
        (a != b).then(|| ConstructionGoal { colors: (a.min(b), a.max(b)) })
    }

    pub fn colors(&self) -> (u8, u8) {
        self.colors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    Demonstrator,
    Learner,
}

/// Per-task geometry needed by the step function and goal predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rules {
    pub t_max: u32,
    /// Passing: rows strictly above this row are the goal region.
    /// Maze: horizontal inner wall row.
    pub wall_row: usize,
    /// Maze: vertical inner wall column.
    pub wall_col: usize,
    /// Maze goal room.
    pub goal_room: Rect,
    pub palette: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridWorldState {
    pub task: GridTask,
    pub rules: Rules,
    pub cells: [Option<BlockKind>; CELLS],
    pub demonstrator: Pos,
    /// `None` when the learner is removed from the world.
    pub learner: Option<Pos>,
    pub demonstrator_inventory: Option<BlockKind>,
    pub learner_inventory: Option<BlockKind>,
    pub step_count: u32,
    pub goal: Option<ConstructionGoal>,
}

impl GridWorldState {
    pub fn block(&self, p: Pos) -> Option<BlockKind> {
        self.cells[p.index()]
    }

    pub fn set_block(&mut self, p: Pos, b: Option<BlockKind>) {
        self.cells[p.index()] = b;
    }

    pub fn position(&self, agent: Agent) -> Option<Pos> {
        match agent {
            Agent::Demonstrator => Some(self.demonstrator),
            Agent::Learner => self.learner,
        }
    }

    pub fn inventory(&self, agent: Agent) -> Option<BlockKind> {
        match agent {
            Agent::Demonstrator => self.demonstrator_inventory,
            Agent::Learner => self.learner_inventory,
        }
    }

    fn other(&self, agent: Agent) -> Option<Pos> {
        match agent {
            Agent::Demonstrator => self.learner,
            Agent::Learner => Some(self.demonstrator),
        }
    }

    /// A cell an agent may step onto or drop an item onto.
    pub fn is_free(&self, p: Pos) -> bool {
        self.block(p).is_none() && p != self.demonstrator && Some(p) != self.learner
    }

    /// Maze cells on the inner walls; doors standing there are installed.
    pub fn is_gap_cell(&self, p: Pos) -> bool {
        self.task == GridTask::Maze
            && !p.is_border()
            && (p.row == self.rules.wall_row || p.col == self.rules.wall_col)
    }

    fn can_take(&self, p: Pos, holding: Option<BlockKind>) -> bool {
        let Some(block) = self.block(p) else { return false };
        match self.task {
            GridTask::Passing => holding.is_none() && block == BlockKind::Wall && !p.is_border(),
            GridTask::Construction => holding.is_none() && matches!(block, BlockKind::Colored(_)),
            GridTask::Maze => match block {
                BlockKind::Key | BlockKind::Hammer => holding.is_none(),
                d if d.is_door() => {
                    if self.is_gap_cell(p) {
                        holding.is_some() && holding == d.opened_by()
                    } else {
                        holding.is_none()
                    }
                }
                _ => false,
            },
        }
    }

    /// Apply one agent's action in place. Illegal actions are no-ops.
    pub fn apply(&mut self, agent: Agent, action: GridAction) {
        let Some(pos) = self.position(agent) else { return };
        match action {
            GridAction::Stop => {}
            GridAction::MoveN | GridAction::MoveS | GridAction::MoveW | GridAction::MoveE => {
                let target = pos.offset(action.delta().unwrap());
                if let Some(t) = target.filter(|&t| self.block(t).is_none() && Some(t) != self.other(agent)) {
                    match agent {
                        Agent::Demonstrator => self.demonstrator = t,
                        Agent::Learner => self.learner = Some(t),
                    }
                }
            }
            GridAction::PickUp => {
                let holding = self.inventory(agent);
                if let Some(t) = pos.neighbours().find(|&t| self.can_take(t, holding)) {
                    let block = self.block(t).unwrap();
                    self.set_block(t, None);
                    // Opening an installed door consumes the door; the tool stays in hand.
                    if holding.is_none() {
                        match agent {
                            Agent::Demonstrator => self.demonstrator_inventory = Some(block),
                            Agent::Learner => self.learner_inventory = Some(block),
                        }
                    }
                }
            }
            GridAction::PutDown => {
                let Some(item) = self.inventory(agent) else { return };
                if let Some(t) = pos.neighbours().find(|&t| self.is_free(t)) {
                    self.set_block(t, Some(item));
                    match agent {
                        Agent::Demonstrator => self.demonstrator_inventory = None,
                        Agent::Learner => self.learner_inventory = None,
                    }
                }
            }
        }
    }

    /// Close the current tick: advance the step counter and report termination.
    pub fn end_tick(&mut self) -> bool {
        self.step_count += 1;
        self.is_terminal()
    }

    pub fn is_terminal(&self) -> bool {
        goal_reached(self) || self.step_count >= self.rules.t_max
    }

    /// Plain-text rendering, one character per cell.
    pub fn render_ascii(&self) -> String {
        let mut out = String::with_capacity(CELLS + GRID);
        for r in 0..GRID {
            for c in 0..GRID {
                let p = Pos::new(r, c);
                let ch = if p == self.demonstrator {
                    'D'
                } else if Some(p) == self.learner {
                    'L'
                } else {
                    self.block(p).map_or('.', BlockKind::glyph)
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Exact serialization of the world hashed to 64 bits (FNV-1a).
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write(&[self.task as u8]);
        for cell in &self.cells {
            h.write(&[encode_block(*cell)]);
        }
        h.write(&[self.demonstrator.index() as u8]);
        h.write(&[self.learner.map_or(255, |p| p.index() as u8)]);
        h.write(&[encode_block(self.demonstrator_inventory), encode_block(self.learner_inventory)]);
        if let Some(g) = self.goal {
            h.write(&[g.colors.0, g.colors.1]);
        }
        h.finish()
    }
}

fn encode_block(b: Option<BlockKind>) -> u8 {
    match b {
        None => 0,
        Some(BlockKind::Wall) => 1,
        Some(BlockKind::YellowDoor) => 2,
        Some(BlockKind::BlueDoor) => 3,
        Some(BlockKind::Key) => 4,
        Some(BlockKind::Hammer) => 5,
        Some(BlockKind::Colored(c)) => 16 + c,
    }
}

pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64::new()
    }
}

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Execute one tick: demonstrator first, then the learner (if present).
pub fn step_grid(
    state: &GridWorldState,
    demo_action: GridAction,
    learner_action: Option<GridAction>,
) -> (GridWorldState, bool) {
    let mut next = state.clone();
    next.apply(Agent::Demonstrator, demo_action);
    if let Some(a) = learner_action {
        next.apply(Agent::Learner, a);
    }
    let terminal = next.end_tick();
    (next, terminal)
}

/// Task-specific goal predicate for the demonstrator.
pub fn goal_reached(state: &GridWorldState) -> bool {
    match state.task {
        GridTask::Passing => state.demonstrator.row < state.rules.wall_row,
        GridTask::Maze => state.rules.goal_room.contains(state.demonstrator),
        GridTask::Construction => {
            let Some(goal) = state.goal else { return false };
            let (a, b) = goal.colors();
            let find = |c: u8| {
                (0..CELLS).map(Pos::from_index).find(|&p| state.block(p) == Some(BlockKind::Colored(c)))
            };
            match (find(a), find(b)) {
                (Some(pa), Some(pb)) => pa.neighbours().any(|n| n == pb),
                _ => false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viewpoint {
    Demonstrator,
    Learner,
}

/// Dense `H × W × C` tensor, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Observation { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    pub fn channel_sum(&self, ch: usize) -> f64 {
        self.data.iter().skip(ch).step_by(self.channels).sum()
    }

    /// Stack the channels of two observations with equal spatial shape.
    pub fn concat_channels(&self, other: &Observation) -> Observation {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.cells() * channels);
        for cell in 0..self.cells() {
            data.extend_from_slice(&self.data[cell * self.channels..(cell + 1) * self.channels]);
            data.extend_from_slice(&other.data[cell * other.channels..(cell + 1) * other.channels]);
        }
        Observation { height: self.height, width: self.width, channels, data }
    }
}

/// One-hot block channels plus a final channel marking the viewing agent.
/// The other agent is written into the wall channel; carried items are not visible.
pub fn encode_grid_observation(state: &GridWorldState, viewpoint: Viewpoint) -> Observation {
    let kinds = state.task.block_kinds(state.rules.palette);
    let channels = kinds.len() + 1;
    let mut obs = Observation::zeros(GRID, GRID, channels);
    for idx in 0..CELLS {
        if let Some(b) = state.cells[idx] {
            let ch = kinds.iter().position(|&k| k == b).expect("block kind outside task palette");
            obs.data[idx * channels + ch] = 1.0;
        }
    }
    let (me, other) = match viewpoint {
        Viewpoint::Demonstrator => (Some(state.demonstrator), state.learner),
        Viewpoint::Learner => (state.learner, Some(state.demonstrator)),
    };
    if let Some(o) = other {
        obs.data[o.index() * channels] = 1.0;
    }
    if let Some(m) = me {
        obs.data[m.index() * channels + channels - 1] = 1.0;
    }
    obs
}

#[cfg(test)]
mod tests;
