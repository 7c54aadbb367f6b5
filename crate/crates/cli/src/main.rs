use clap::{Parser, Subcommand, ValueEnum};
use probe_core::applications::{
    final_mean, retrain_with_fixed_tracker, transfer_model, write_curve_csv, TaskRewardMode, TransferPolicy,
};
use probe_core::config::{ConfigError, ExperimentConfig, OUTPUT_ENV, SNAPSHOT_FILE};
use probe_core::evaluation::{
    eval_demonstrator_success, eval_distillation, eval_prediction_accuracy, run_ablation, write_ablation_csv,
    AblationGrid, EvalSuite, ModelPredictor, ProbeLearner,
};
use probe_core::model::{load_checkpoint, save_checkpoint, MindModel};
use probe_core::training::{RewardMode, RunPaths, TrainConfig, Trainer};
use probe_core::world::GridLayouts;
use probe_core::Task;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

mod replay;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "probe", version, about = "Train and evaluate probing-based agent models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set iterations=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        Ok(match &self.config {
            Some(p) => ExperimentConfig::load(p, &self.overrides)?,
            None => probe_core::config::parse_with_overrides("", &self.overrides)?,
        })
    }
}

#[derive(clap::Args)]
struct SuiteArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Expected task; the checkpoint must match.
    #[arg(long)]
    task: Option<Task>,
    #[arg(long, default_value_t = 100)]
    settings: usize,
    #[arg(long, default_value_t = 1_000_000)]
    first_seed: u64,
    /// Directory for the result tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayLearner {
    Policy,
    Random,
    Absent,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per configured seed.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Discard an existing run instead of resuming it.
        #[arg(long)]
        fresh: bool,
    },
    /// Action-prediction accuracy on unseen settings, with and without noise.
    Eval {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Also measure demonstrator success under this checkpoint's learner.
        #[arg(long)]
        probe_episodes: Option<usize>,
    },
    /// Success rate of the learned demonstrator policy acting alone.
    Distill {
        #[command(flatten)]
        suite: SuiteArgs,
    },
    /// Retrain the learner on the collaborative Construction task.
    Collab(TransferArgs),
    /// Retrain the learner on the competitive Construction task.
    Compete(TransferArgs),
    /// Train and evaluate a grid over latent sizes and reward modes.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        modes: Vec<RewardMode>,
    },
    /// Render one episode step by step.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use a randomized test setting instead of the training setting.
        #[arg(long)]
        test: bool,
        #[arg(long, value_enum, default_value_t = ReplayLearner::Policy)]
        learner: ReplayLearner,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct TransferArgs {
    /// Pretrained Construction checkpoint providing the tracker.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Train the baseline that sees both observations and no mind vector.
    #[arg(long)]
    no_mind: bool,
    #[arg(long, default_value_t = 2000)]
    iterations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, seed, fresh } => cmd_train(&config.load()?, seed, fresh),
        Command::Eval { suite, noise, probe_episodes } => cmd_eval(&suite, noise, probe_episodes),
        Command::Distill { suite } => cmd_distill(&suite),
        Command::Collab(args) => cmd_transfer(&args, TaskRewardMode::Collaborate),
        Command::Compete(args) => cmd_transfer(&args, TaskRewardMode::Compete),
        Command::Ablate { config, dims, modes } => cmd_ablate(&config.load()?, dims, modes),
        Command::Replay { checkpoint, seed, test, learner, out } => {
            let model = load_model(&checkpoint, None)?;
            let trace = replay::trace(&model, seed, test, learner.into()).map_err(runtime)?;
            match out {
                Some(p) => write_atomic(&p, trace.as_bytes())?,
                None => print!("{trace}"),
            }
            Ok(())
        }
    }
}

impl From<ReplayLearner> for replay::LearnerKind {
    fn from(l: ReplayLearner) -> Self {
        match l {
            ReplayLearner::Policy => replay::LearnerKind::Policy,
            ReplayLearner::Random => replay::LearnerKind::Random,
            ReplayLearner::Absent => replay::LearnerKind::Absent,
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, only: Option<u64>, fresh: bool) -> Result<(), CliError> {
    let seeds: Vec<u64> = match only {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let layouts = GridLayouts::default();
    for seed in seeds {
        let dir = cfg.run_dir(seed);
        let paths = RunPaths::new(&dir);
        if fresh && dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(SNAPSHOT_FILE), cfg.to_toml().as_bytes())?;
        let train = cfg.train_config(seed);
        let mut trainer = match Trainer::resume(&paths, train.clone(), layouts.clone()).map_err(runtime)? {
            Some(t) => {
                log::info!("resuming {} at iteration {}", dir.display(), t.state.iteration);
                t
            }
            None => {
                if paths.metrics().exists() {
                    fs::remove_file(paths.metrics())?;
                }
                let model = MindModel::new(cfg.model_config(&layouts), seed).map_err(runtime)?;
                Trainer::new(model, train, layouts.clone()).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        let rows = trainer.train(Some(&paths)).map_err(runtime)?;
        let last = rows.last().map(|r| format!(", final il_loss {:.4}", r.il_loss)).unwrap_or_default();
        println!(
            "trained {} {} seed {seed}: {} iterations{last} -> {}",
            cfg.task,
            cfg.mode,
            trainer.state.iteration,
            dir.display()
        );
    }
    Ok(())
}

fn load_model(path: &Path, task: Option<Task>) -> Result<MindModel, CliError> {
    if !path.exists() {
        return Err(CliError::Runtime(format!("checkpoint {} not found", path.display())));
    }
    let model = load_checkpoint(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if let Some(t) = task {
        if t != model.config.task {
            return Err(CliError::Config(format!(
                "checkpoint {} was trained on {}, not {t}",
                path.display(),
                model.config.task
            )));
        }
    }
    Ok(model)
}

/// Result tables go next to the run by default: `<run>/eval/`.
fn output_dir(args: &SuiteArgs) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    let parent = args.checkpoint.parent().unwrap_or(Path::new("."));
    let run = if parent.file_name().is_some_and(|n| n == probe_core::training::CHECKPOINT_DIR) {
        parent.parent().unwrap_or(Path::new("."))
    } else {
        parent
    };
    run.join("eval")
}

fn table_name(kind: &str, model: &MindModel, checkpoint: &Path) -> String {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    format!("{kind}_{}_d{}_{stem}.csv", model.config.task, model.config.latent_dim)
}

fn suite_for(args: &SuiteArgs, model: &MindModel) -> EvalSuite {
    EvalSuite::new(model.config.task, args.settings, args.first_seed)
}

fn csv_bytes(report: &probe_core::evaluation::EvalReport) -> Vec<u8> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf).expect("write to memory");
    buf
}

fn cmd_eval(args: &SuiteArgs, noise: f64, probe_episodes: Option<usize>) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&noise) || args.settings == 0 {
        return Err(CliError::Config("noise must lie in [0, 1] and settings be positive".into()));
    }
    let model = load_model(&args.checkpoint, args.task)?;
    let suite = suite_for(args, &model);
    let clean = eval_prediction_accuracy(&mut ModelPredictor::new(&model), &suite).map_err(runtime)?;
    let noisy = eval_prediction_accuracy(&mut ModelPredictor::new(&model), &suite.clone().with_noise(noise))
        .map_err(runtime)?;
    let digest = suite.digest().map_err(runtime)?;
    let out = output_dir(args);
    write_atomic(&out.join(table_name("accuracy", &model, &args.checkpoint)), &csv_bytes(&clean))?;
    write_atomic(&out.join(table_name("noise", &model, &args.checkpoint)), &csv_bytes(&noisy))?;
    println!(
        "{} accuracy {:.4} ({} steps, {} settings), noise {noise}: {:.4}, suite {digest:016x}",
        model.config.task,
        clean.accuracy(),
        clean.total_steps(),
        clean.settings.len(),
        noisy.accuracy()
    );
    if let Some(n) = probe_episodes {
        let layouts = GridLayouts::default();
        let probed = eval_demonstrator_success(model.config.task, &layouts, ProbeLearner::Model(&model), n, 0)
            .map_err(runtime)?;
        let random = eval_demonstrator_success(model.config.task, &layouts, ProbeLearner::Uniform, n, 0)
            .map_err(runtime)?;
        println!("demonstrator success over {n} episodes: probing learner {probed:.3}, random learner {random:.3}");
    }
    Ok(())
}

fn cmd_distill(args: &SuiteArgs) -> Result<(), CliError> {
    if args.settings == 0 {
        return Err(CliError::Config("settings must be positive".into()));
    }
    let model = load_model(&args.checkpoint, args.task)?;
    let suite = suite_for(args, &model);
    let report = eval_distillation(&model, &suite).map_err(runtime)?;
    let out = output_dir(args);
    write_atomic(&out.join(table_name("distill", &model, &args.checkpoint)), &csv_bytes(&report))?;
    println!("{} distillation success {:.4} over {} settings", model.config.task, report.success_rate(), report.settings.len());
    Ok(())
}

fn cmd_transfer(args: &TransferArgs, mode: TaskRewardMode) -> Result<(), CliError> {
    if args.iterations == 0 {
        return Err(CliError::Config("iterations must be at least 1".into()));
    }
    let pretrained = load_model(&args.checkpoint, Some(Task::Construction))?;
    let policy = if args.no_mind { TransferPolicy::NoMind } else { TransferPolicy::Mind };
    let variant = if args.no_mind { "no_mind" } else { "mind" };
    let mut model = transfer_model(&pretrained, policy, args.seed.wrapping_add(1)).map_err(runtime)?;
    let config = TrainConfig { iterations: args.iterations, seed: args.seed, ..TrainConfig::default() };
    let curve = retrain_with_fixed_tracker(&mut model, mode, &config, &GridLayouts::default()).map_err(runtime)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(Task::Construction.name()).join(mode.name()).join(args.seed.to_string()).join(variant)
    });
    let mut buf = Vec::new();
    write_curve_csv(&curve, &mut buf).expect("write to memory");
    write_atomic(&out.join("curve.csv"), &buf)?;
    fs::create_dir_all(&out)?;
    save_checkpoint(&model, false, &out.join("final.bin")).map_err(runtime)?;
    println!(
        "{mode} ({variant}) seed {}: final 10% rescaled return {:.4}, demonstrator alone {:.4} -> {}",
        args.seed,
        final_mean(&curve, 0.1),
        curve.iter().map(|p| p.demonstrator_only).sum::<f64>() / curve.len() as f64,
        out.display()
    );
    Ok(())
}

fn cmd_ablate(cfg: &ExperimentConfig, dims: Vec<usize>, modes: Vec<RewardMode>) -> Result<(), CliError> {
    if dims.iter().any(|&d| d == 0) {
        return Err(CliError::Config("latent sizes must be positive".into()));
    }
    let modes = if modes.is_empty() { vec![cfg.mode] } else { modes };
    let layouts = GridLayouts::default();
    let grid = AblationGrid {
        model: cfg.model_config(&layouts),
        train: cfg.train_config(0),
        latent_dims: dims,
        modes,
        seeds: cfg.seeds.clone(),
        suite: cfg.eval_suite(),
    };
    let root = cfg.output_root().join(cfg.task.name()).join("ablation");
    let (rows, digest) = run_ablation(&grid, Some(&root));
    let path = root.join("ablation.csv");
    let mut w = BufWriter::new(Vec::new());
    write_ablation_csv(&rows, &mut w).expect("write to memory");
    write_atomic(&path, &w.into_inner().expect("flush to memory"))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let digest = digest.map(|d| format!("{d:016x}")).unwrap_or_else(|| "unavailable".into());
    println!("ablation: {} cells ({failed} failed), suite {digest} -> {}", rows.len(), path.display());
    std::io::stdout().flush()?;
    if failed == rows.len() {
        return Err(CliError::Runtime("every ablation cell failed".into()));
    }
    Ok(())
}
