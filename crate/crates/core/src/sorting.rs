//! The Sorting task: ten 4-bit numbers, demonstrator swaps and learner bit
//! flips on a one-in-five schedule.

use crate::world::{Fnv64, Observation};
use crate::SettingMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const ARRAY_LEN: usize = 10;
pub const BITS: usize = 4;
pub const SORT_T_MAX: u32 = 30;
/// The learner acts on every `LEARNER_PERIOD`-th demonstrator step.
pub const LEARNER_PERIOD: u32 = 5;
pub const TRAINING_ARRAY: [u8; ARRAY_LEN] = [2, 0, 5, 12, 14, 10, 3, 11, 9, 7];

#[derive(Debug, Error)]
pub enum SortError {
    #[error("learner action supplied={supplied} but scheduled={scheduled}")]
    Schedule { supplied: bool, scheduled: bool },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Persistent scan position of the modified bubble sort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BubbleSortCursor(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SortState {
    pub values: [u8; ARRAY_LEN],
    pub step_count: u32,
    pub demo_steps_since_learner: u32,
    pub cursor: BubbleSortCursor,
    pub t_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortDemoAction {
    Swap(usize, usize),
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortLearnerAction {
    FlipBit { idx: usize, bit: usize },
    NoOp,
}

impl SortDemoAction {
    /// Decode factored head indices; any index past the array means "do nothing".
    pub fn from_indices(i: usize, j: usize) -> Self {
        if i >= ARRAY_LEN || j >= ARRAY_LEN {
            SortDemoAction::NoOp
        } else {
            SortDemoAction::Swap(i, j)
        }
    }

    pub fn indices(self) -> (usize, usize) {
        match self {
            SortDemoAction::Swap(i, j) => (i, j),
            SortDemoAction::NoOp => (ARRAY_LEN, ARRAY_LEN),
        }
    }
}

impl SortLearnerAction {
    pub fn from_indices(idx: usize, bit: usize) -> Self {
        if idx >= ARRAY_LEN || bit >= BITS {
            SortLearnerAction::NoOp
        } else {
            SortLearnerAction::FlipBit { idx, bit }
        }
    }

    pub fn indices(self) -> (usize, usize) {
        match self {
            SortLearnerAction::FlipBit { idx, bit } => (idx, bit),
            SortLearnerAction::NoOp => (ARRAY_LEN, 0),
        }
    }
}

impl SortState {
    pub fn new(values: [u8; ARRAY_LEN]) -> Self {
        SortState {
            values: values.map(|v| v & 0x0f),
            step_count: 0,
            demo_steps_since_learner: 0,
            cursor: BubbleSortCursor(0),
            t_max: SORT_T_MAX,
        }
    }

    pub fn is_sorted(&self) -> bool {
        is_ascending(&self.values)
    }

    /// Whether the learner acts on the current tick.
    pub fn learner_scheduled(&self) -> bool {
        self.demo_steps_since_learner == LEARNER_PERIOD - 1
    }

    pub fn apply_demo(&mut self, action: SortDemoAction) {
        if let SortDemoAction::Swap(i, j) = action {
            if i < ARRAY_LEN && j < ARRAY_LEN {
                self.values.swap(i, j);
            }
        }
    }

    pub fn apply_learner(&mut self, action: SortLearnerAction) {
        if let SortLearnerAction::FlipBit { idx, bit } = action {
            if idx < ARRAY_LEN && bit < BITS {
                self.values[idx] ^= 1 << bit;
            }
        }
    }

    /// Advance counters after a tick and report termination.
    pub fn end_tick(&mut self) -> bool {
        let learner_acted = self.learner_scheduled();
        self.step_count += 1;
        self.demo_steps_since_learner =
            if learner_acted { 0 } else { self.demo_steps_since_learner + 1 };
        self.is_terminal()
    }

    pub fn is_terminal(&self) -> bool {
        self.is_sorted() || self.step_count >= self.t_max
    }

    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write(&self.values);
        h.finish()
    }

    pub fn render(&self) -> String {
        let cells: Vec<String> = self.values.iter().map(|v| format!("{v:2}")).collect();
        format!("[{}]", cells.join(" "))
    }
}

pub fn is_ascending(values: &[u8]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

pub fn reset_sort(mode: SettingMode, seed: u64) -> SortState {
    match mode {
        SettingMode::Train => SortState::new(TRAINING_ARRAY),
        SettingMode::Test => SortState::new(random_array(seed)),
    }
}

pub fn random_array(seed: u64) -> [u8; ARRAY_LEN] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x534f_5254_0000_0000);
    std::array::from_fn(|_| rng.random_range(0..16u8))
}

/// One tick: swap first, then the scheduled bit flip.
pub fn step_sort(
    state: &SortState,
    demo_action: SortDemoAction,
    learner_action: Option<SortLearnerAction>,
) -> Result<(SortState, bool), SortError> {
    let scheduled = state.learner_scheduled();
    if scheduled != learner_action.is_some() {
        return Err(SortError::Schedule { supplied: learner_action.is_some(), scheduled });
    }
    let mut next = state.clone();
    next.apply_demo(demo_action);
    if let Some(a) = learner_action {
        next.apply_learner(a);
    }
    let terminal = next.end_tick();
    Ok((next, terminal))
}

/// `10 × 1 × 4` tensor; channel `b` at position `p` is bit `b` (LSB first) of `values[p]`.
pub fn encode_sort_observation(state: &SortState) -> Observation {
    let mut obs = Observation::zeros(ARRAY_LEN, 1, BITS);
    for (p, &v) in state.values.iter().enumerate() {
        for b in 0..BITS {
            obs.set(p, 0, b, ((v >> b) & 1) as f64);
        }
    }
    obs
}

pub fn decode_sort_observation(obs: &Observation) -> [u8; ARRAY_LEN] {
    std::array::from_fn(|p| {
        (0..BITS).map(|b| ((obs.get(p, 0, b) > 0.5) as u8) << b).sum()
    })
}

/// Write arrays as comma-separated lines.
pub fn write_arrays<W: Write>(mut out: W, arrays: &[[u8; ARRAY_LEN]]) -> io::Result<()> {
    for a in arrays {
        let line: Vec<String> = a.iter().map(u8::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_arrays<R: BufRead>(input: R) -> Result<Vec<[u8; ARRAY_LEN]>, SortError> {
    let mut arrays = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<u8>, _> = line.split(',').map(|t| t.trim().parse::<u8>()).collect();
        let values = parsed.map_err(|e| SortError::Parse { line: n + 1, msg: e.to_string() })?;
        if values.len() != ARRAY_LEN || values.iter().any(|&v| v > 15) {
            return Err(SortError::Parse {
                line: n + 1,
                msg: format!("expected {ARRAY_LEN} values in 0..=15"),
            });
        }
        arrays.push(values.try_into().unwrap());
    }
    Ok(arrays)
}
