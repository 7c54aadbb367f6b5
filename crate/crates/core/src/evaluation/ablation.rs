use super::{eval_distillation, eval_prediction_accuracy, EvalSuite, ModelPredictor};
use crate::model::{MindModel, ModelConfig};
use crate::task::Task;
use crate::training::{RewardMode, RunPaths, TrainConfig, Trainer};
use log::{info, warn};
use std::io::{self, Write};
use std::path::Path;

pub const ABLATION_HEADER: &str = "task,latent_dim,mode,seed,accuracy,noisy_accuracy,distill_success,error";

/// Grid of runs sharing one evaluation suite.
#[derive(Debug, Clone)]
pub struct AblationGrid {
    /// Widths and task; `latent_dim` is replaced per cell.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub latent_dims: Vec<usize>,
    pub modes: Vec<RewardMode>,
    pub seeds: Vec<u64>,
    pub suite: EvalSuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCell {
    pub task: Task,
    pub latent_dim: usize,
    pub mode: RewardMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub accuracy: f64,
    pub noisy_accuracy: f64,
    pub distill_success: f64,
    /// Set when the cell failed; the metrics are NaN then.
    pub error: Option<String>,
}

impl AblationGrid {
    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for &latent_dim in &self.latent_dims {
            for &mode in &self.modes {
                for &seed in &self.seeds {
                    out.push(AblationCell { task: self.model.task, latent_dim, mode, seed });
                }
            }
        }
        out
    }
}

fn run_cell(grid: &AblationGrid, cell: AblationCell, out_dir: Option<&Path>) -> Result<AblationRow, String> {
    let model_cfg = ModelConfig { latent_dim: cell.latent_dim, ..grid.model.clone() };
    let model = MindModel::new(model_cfg, cell.seed).map_err(|e| e.to_string())?;
    let train = TrainConfig { seed: cell.seed, reward_mode: cell.mode, ..grid.train.clone() };
    let mut trainer = Trainer::new(model, train, grid.suite.layouts.clone()).map_err(|e| e.to_string())?;
    let paths = out_dir.map(|d| {
        RunPaths::new(d.join(cell.task.name()).join(cell.mode.name()).join(format!("d{}", cell.latent_dim)).join(cell.seed.to_string()))
    });
    trainer.train(paths.as_ref()).map_err(|e| e.to_string())?;
    let model = &trainer.model;
    let clean = EvalSuite { noise_rate: 0.0, ..grid.suite.clone() };
    let noisy = EvalSuite { noise_rate: 0.1, ..grid.suite.clone() };
    let accuracy = eval_prediction_accuracy(&mut ModelPredictor::new(model), &clean).map_err(|e| e.to_string())?;
    let noisy_accuracy = eval_prediction_accuracy(&mut ModelPredictor::new(model), &noisy).map_err(|e| e.to_string())?;
    let distill = eval_distillation(model, &clean).map_err(|e| e.to_string())?;
    Ok(AblationRow {
        cell,
        accuracy: accuracy.accuracy(),
        noisy_accuracy: noisy_accuracy.accuracy(),
        distill_success: distill.success_rate(),
        error: None,
    })
}

/// Train and evaluate every cell. A failing cell yields a row carrying its
/// error; the rest of the grid still runs. Returns the rows and the digest of
/// the shared suite.
pub fn run_ablation(grid: &AblationGrid, out_dir: Option<&Path>) -> (Vec<AblationRow>, Option<u64>) {
    let digest = match grid.suite.digest() {
        Ok(d) => {
            info!("ablation suite digest {d:016x} ({} settings)", grid.suite.seeds.len());
            Some(d)
        }
        Err(e) => {
            warn!("ablation suite cannot be built: {e}");
            None
        }
    };
    let rows = grid
        .cells()
        .into_iter()
        .map(|cell| {
            run_cell(grid, cell, out_dir).unwrap_or_else(|e| {
                warn!("ablation cell {cell:?} failed: {e}");
                AblationRow {
                    cell,
                    accuracy: f64::NAN,
                    noisy_accuracy: f64::NAN,
                    distill_success: f64::NAN,
                    error: Some(e),
                }
            })
        })
        .collect();
    (rows, digest)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{ABLATION_HEADER}")?;
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{}",
            r.cell.task, r.cell.latent_dim, r.cell.mode, r.cell.seed, r.accuracy, r.noisy_accuracy, r.distill_success, err
        )?;
    }
    Ok(())
}
