//! Training and test layout generation for the grid tasks.

use super::{
    BlockKind, ConstructionGoal, GridTask, GridWorldState, Pos, Rect, Rules, CELLS, GRID,
};
use crate::demonstrators::plan_distance;
use crate::SettingMode;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("{task:?} test generator found no solvable layout in {attempts} attempts (seed {seed})")]
    Exhausted { task: GridTask, seed: u64, attempts: usize },
    #[error("invalid layout config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassingLayout {
    pub grid_size: usize,
    pub t_max: u32,
    pub wall_row: usize,
    pub train_gap_col: usize,
    pub demonstrator_start: Pos,
    pub learner_start: Pos,
    /// Test-time demonstrator start cells.
    pub test_start_region: Rect,
}

impl Default for PassingLayout {
    fn default() -> Self {
        PassingLayout {
            grid_size: GRID,
            t_max: 15,
            wall_row: 5,
            train_gap_col: 1,
            demonstrator_start: Pos::new(9, 9),
            learner_start: Pos::new(2, 5),
            test_start_region: Rect::new(6, 1, 9, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeLayout {
    pub grid_size: usize,
    pub t_max: u32,
    pub wall_row: usize,
    pub wall_col: usize,
    /// Openings in the inner walls: top, right, bottom, left.
    pub gaps: [Pos; 4],
    pub train_doors: Vec<(Pos, BlockKind)>,
    /// Free door blocks available to the learner in training.
    pub spare_doors: Vec<(Pos, BlockKind)>,
    /// Region for random tool and (at test time) demonstrator placement.
    pub tool_region: Rect,
    pub goal_room: Rect,
    pub demonstrator_start: Pos,
    pub learner_start: Pos,
}

impl Default for MazeLayout {
    fn default() -> Self {
        MazeLayout {
            grid_size: GRID,
            t_max: 60,
            wall_row: 5,
            wall_col: 5,
            gaps: [Pos::new(2, 5), Pos::new(5, 8), Pos::new(8, 5), Pos::new(5, 2)],
            train_doors: vec![
                (Pos::new(2, 5), BlockKind::YellowDoor),
                (Pos::new(5, 2), BlockKind::BlueDoor),
            ],
            spare_doors: vec![
                (Pos::new(9, 9), BlockKind::YellowDoor),
                (Pos::new(9, 6), BlockKind::BlueDoor),
            ],
            tool_region: Rect::new(3, 6, 4, 9),
            goal_room: Rect::new(1, 1, 4, 4),
            demonstrator_start: Pos::new(1, 8),
            learner_start: Pos::new(8, 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionLayout {
    pub grid_size: usize,
    pub t_max: u32,
    pub palette: u8,
    pub block_cells: [Pos; 3],
    pub demonstrator_start: Pos,
    pub learner_start: Pos,
    pub test_obstacles: usize,
}

impl Default for ConstructionLayout {
    fn default() -> Self {
        ConstructionLayout {
            grid_size: GRID,
            t_max: 30,
            palette: 4,
            block_cells: [Pos::new(3, 3), Pos::new(3, 7), Pos::new(7, 5)],
            demonstrator_start: Pos::new(9, 2),
            learner_start: Pos::new(1, 8),
            test_obstacles: 6,
        }
    }
}

/// All grid task configs, serializable as one key-value document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridLayouts {
    pub passing: PassingLayout,
    pub maze: MazeLayout,
    pub construction: ConstructionLayout,
}

impl GridLayouts {
    pub fn from_toml(text: &str) -> Result<Self, LayoutError> {
        let layouts: GridLayouts =
            toml::from_str(text).map_err(|e| LayoutError::Invalid(e.to_string()))?;
        layouts.validate()?;
        Ok(layouts)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layouts serialize")
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let sizes = [self.passing.grid_size, self.maze.grid_size, self.construction.grid_size];
        if sizes.iter().any(|&s| s != GRID) {
            return Err(LayoutError::Invalid(format!("grid_size must be {GRID}")));
        }
        if self.construction.palette < 3 || self.construction.palette > 9 {
            return Err(LayoutError::Invalid("construction palette must be in 3..=9".into()));
        }
        Ok(())
    }

    pub fn t_max(&self, task: GridTask) -> u32 {
        match task {
            GridTask::Passing => self.passing.t_max,
            GridTask::Maze => self.maze.t_max,
            GridTask::Construction => self.construction.t_max,
        }
    }
}

fn empty_room(task: GridTask, rules: Rules) -> GridWorldState {
    let mut cells = [None; CELLS];
    for (idx, cell) in cells.iter_mut().enumerate() {
        if Pos::from_index(idx).is_border() {
            *cell = Some(BlockKind::Wall);
        }
    }
    GridWorldState {
        task,
        rules,
        cells,
        demonstrator: Pos::new(1, 1),
        learner: None,
        demonstrator_inventory: None,
        learner_inventory: None,
        step_count: 0,
        goal: None,
    }
}

fn rng_for(task: GridTask, seed: u64) -> ChaCha8Rng {
    let salt = match task {
        GridTask::Passing => 0x5041_5353,
        GridTask::Maze => 0x4d41_5a45,
        GridTask::Construction => 0x434f_4e53,
    };
    ChaCha8Rng::seed_from_u64(seed ^ (salt << 20))
}

/// Build the initial world for a grid task. The learner is placed at its
/// start cell; callers that evaluate without a learner remove it afterwards.
pub fn reset_grid(
    task: GridTask,
    mode: SettingMode,
    seed: u64,
    layouts: &GridLayouts,
) -> Result<GridWorldState, LayoutError> {
    let mut rng = rng_for(task, seed);
    match task {
        GridTask::Passing => Ok(reset_passing(&layouts.passing, mode, &mut rng)),
        GridTask::Maze => reset_maze(&layouts.maze, mode, seed, &mut rng),
        GridTask::Construction => reset_construction(&layouts.construction, mode, seed, &mut rng),
    }
}

fn reset_passing(cfg: &PassingLayout, mode: SettingMode, rng: &mut ChaCha8Rng) -> GridWorldState {
    let rules = Rules {
        t_max: cfg.t_max,
        wall_row: cfg.wall_row,
        wall_col: 0,
        goal_room: Rect::new(1, 1, cfg.wall_row - 1, GRID - 2),
        palette: 0,
    };
    let mut s = empty_room(GridTask::Passing, rules);
    let (gap, start) = match mode {
        SettingMode::Train => (cfg.train_gap_col, cfg.demonstrator_start),
        SettingMode::Test => {
            let gap = rng.random_range(1..GRID - 1);
            let cells: Vec<Pos> = cfg.test_start_region.cells().collect();
            (gap, *cells.choose(rng).unwrap())
        }
    };
    for c in 1..GRID - 1 {
        if c != gap {
            s.set_block(Pos::new(cfg.wall_row, c), Some(BlockKind::Wall));
        }
    }
    s.demonstrator = start;
    s.learner = Some(cfg.learner_start);
    s
}

fn reset_maze(
    cfg: &MazeLayout,
    mode: SettingMode,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GridWorldState, LayoutError> {
    let rules = Rules {
        t_max: cfg.t_max,
        wall_row: cfg.wall_row,
        wall_col: cfg.wall_col,
        goal_room: cfg.goal_room,
        palette: 0,
    };
    for _ in 0..MAX_ATTEMPTS {
        let mut s = empty_room(GridTask::Maze, rules);
        for i in 1..GRID - 1 {
            s.set_block(Pos::new(cfg.wall_row, i), Some(BlockKind::Wall));
            s.set_block(Pos::new(i, cfg.wall_col), Some(BlockKind::Wall));
        }
        for g in cfg.gaps {
            s.set_block(g, None);
        }
        let region: Vec<Pos> = cfg.tool_region.cells().collect();
        match mode {
            SettingMode::Train => {
                for &(p, d) in cfg.train_doors.iter().chain(&cfg.spare_doors) {
                    s.set_block(p, Some(d));
                }
                let free: Vec<Pos> =
                    region.iter().copied().filter(|&p| p != cfg.demonstrator_start).collect();
                let picks: Vec<Pos> = free.choose_multiple(rng, 2).copied().collect();
                s.set_block(picks[0], Some(BlockKind::Key));
                s.set_block(picks[1], Some(BlockKind::Hammer));
                s.demonstrator = cfg.demonstrator_start;
            }
            SettingMode::Test => {
                let n_doors = rng.random_range(1..=2);
                let mut gaps = cfg.gaps.to_vec();
                gaps.shuffle(rng);
                for &g in gaps.iter().take(n_doors) {
                    let door =
                        if rng.random_bool(0.5) { BlockKind::YellowDoor } else { BlockKind::BlueDoor };
                    s.set_block(g, Some(door));
                }
                let picks: Vec<Pos> = region.choose_multiple(rng, 3).copied().collect();
                s.set_block(picks[0], Some(BlockKind::Key));
                s.set_block(picks[1], Some(BlockKind::Hammer));
                s.demonstrator = picks[2];
            }
        }
        s.learner = Some(cfg.learner_start);
        if mode == SettingMode::Train || solvable(&s) {
            return Ok(s);
        }
    }
    Err(LayoutError::Exhausted { task: GridTask::Maze, seed, attempts: MAX_ATTEMPTS })
}

fn reset_construction(
    cfg: &ConstructionLayout,
    mode: SettingMode,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GridWorldState, LayoutError> {
    let rules = Rules {
        t_max: cfg.t_max,
        wall_row: 0,
        wall_col: 0,
        goal_room: Rect::new(0, 0, 0, 0),
        palette: cfg.palette,
    };
    for _ in 0..MAX_ATTEMPTS {
        let mut s = empty_room(GridTask::Construction, rules);
        let mut palette: Vec<u8> = (0..cfg.palette).collect();
        palette.shuffle(rng);
        for (&cell, &color) in cfg.block_cells.iter().zip(&palette) {
            s.set_block(cell, Some(BlockKind::Colored(color)));
        }
        let placed = &palette[..3];
        let pair: Vec<u8> = placed.choose_multiple(rng, 2).copied().collect();
        s.goal = ConstructionGoal::new(pair[0], pair[1]);
        s.demonstrator = cfg.demonstrator_start;
        s.learner = Some(cfg.learner_start);
        if mode == SettingMode::Test {
            let mut around: Vec<Pos> = cfg
                .block_cells
                .iter()
                .flat_map(|&b| ring8(b))
                .filter(|&p| {
                    !p.is_border()
                        && s.block(p).is_none()
                        && p != cfg.demonstrator_start
                        && p != cfg.learner_start
                })
                .collect();
            around.sort();
            around.dedup();
            for &p in around.choose_multiple(rng, cfg.test_obstacles) {
                s.set_block(p, Some(BlockKind::Wall));
            }
        }
        if solvable(&s) {
            return Ok(s);
        }
    }
    Err(LayoutError::Exhausted { task: GridTask::Construction, seed, attempts: MAX_ATTEMPTS })
}

fn ring8(p: Pos) -> impl Iterator<Item = Pos> {
    (-1isize..=1)
        .flat_map(|dr| (-1isize..=1).map(move |dc| (dr, dc)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |d| p.offset(d))
}

fn solvable(s: &GridWorldState) -> bool {
    let mut solo = s.clone();
    solo.learner = None;
    plan_distance(&solo).is_some()
}
