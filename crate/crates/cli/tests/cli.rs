use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn probe(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probe"))
        .args(args)
        .env("PROBE_RUNS", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "filters = 2\nfc_dim = 8\nlstm_dim = 8\nlatent_dim = 2\n";

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p
}

fn train_small(root: &Path, task: &str, iterations: u64) -> PathBuf {
    let cfg = write_config(root, &format!("task = \"{task}\"\niterations = {iterations}\ncheckpoint_interval = 5\n"));
    let o = probe(root, &["train", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    root.join(task).join("mind_change").join("0")
}

fn final_checkpoint(run: &Path) -> PathBuf {
    let mut ckpts: Vec<PathBuf> = fs::read_dir(run.join("checkpoints")).unwrap().map(|e| e.unwrap().path()).collect();
    ckpts.sort();
    ckpts.pop().unwrap()
}

#[test]
fn train_writes_metrics_checkpoints_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_small(tmp.path(), "passing", 10);
    let metrics = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 10);
    assert!(fs::read_dir(run.join("checkpoints")).unwrap().count() >= 1);
    let snap = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snap.contains("iterations = 10"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = train_small(a.path(), "sorting", 6);
    let rb = train_small(b.path(), "sorting", 6);
    assert_eq!(fs::read(ra.join("metrics.jsonl")).unwrap(), fs::read(rb.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(final_checkpoint(&ra)).unwrap(), fs::read(final_checkpoint(&rb)).unwrap());
}

#[test]
fn invalid_configs_exit_with_one_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "gamma = 1.2\n");
    let o = probe(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("passing").exists());

    let cfg = write_config(tmp.path(), "gama = 0.9\n");
    assert_eq!(probe(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(probe(tmp.path(), &["train", "--set", "iterations=0"]).status.code(), Some(1));
    assert_eq!(probe(tmp.path(), &["train", "--bogus"]).status.code(), Some(1));
}

#[test]
fn eval_untrained_checkpoint_reports_chance_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_small(tmp.path(), "sorting", 1);
    let ckpt = final_checkpoint(&run);
    let o = probe(tmp.path(), &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--settings", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let acc: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(acc < 0.3, "{line}");
    let table = run.join("eval").join("accuracy_sorting_d2_ckpt_000001.csv");
    let text = fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(run.join("eval").join("noise_sorting_d2_ckpt_000001.csv").exists());
}

#[test]
fn eval_rejects_missing_and_mismatched_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope").join("ckpt.bin");
    let out = tmp.path().join("tables");
    let o = probe(tmp.path(), &["eval", "--checkpoint", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let run = train_small(tmp.path(), "passing", 1);
    let ckpt = final_checkpoint(&run);
    let o = probe(
        tmp.path(),
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--task", "maze", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn distill_writes_success_table() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_small(tmp.path(), "passing", 1);
    let ckpt = final_checkpoint(&run);
    let o = probe(tmp.path(), &["distill", "--checkpoint", ckpt.to_str().unwrap(), "--settings", "5"]);
    assert!(o.status.success());
    let text = fs::read_to_string(run.join("eval").join("distill_passing_d2_ckpt_000001.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn replay_has_one_frame_per_step_and_consistent_rewards() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_small(tmp.path(), "passing", 2);
    let ckpt = final_checkpoint(&run);
    let o = probe(tmp.path(), &["replay", "--checkpoint", ckpt.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    let steps: usize = header.split_whitespace().skip_while(|w| *w != "steps").nth(1).unwrap().parse().unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("frame ")).count(), steps);

    // The first frame is the fixed training layout.
    let layout = include_str!("../../core/layouts/passing_train.txt");
    let frame0: Vec<&str> = text.lines().skip(2).take(11).collect();
    let walls = |rows: &[&str]| -> Vec<Vec<bool>> {
        rows.iter().map(|r| r.chars().map(|c| c == '#').collect()).collect()
    };
    assert_eq!(walls(&frame0), walls(&layout.lines().collect::<Vec<_>>()));

    let mut prev = vec![0.0f64; 2];
    for line in text.lines().filter(|l| l.starts_with("step ")) {
        let words: Vec<&str> = line.split_whitespace().collect();
        let field = |k: &str| words[words.iter().position(|w| *w == k).unwrap() + 1];
        let m: Vec<f64> = field("m").split(',').map(|v| v.parse().unwrap()).collect();
        let reward: f64 = field("reward").parse().unwrap();
        let expect: f64 = m.iter().zip(&prev).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((reward - expect).abs() <= 1e-12 * expect.max(1.0), "{line}");
        prev = m;
    }
}

#[test]
fn collab_and_compete_write_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_small(tmp.path(), "construction", 1);
    let ckpt = final_checkpoint(&run);
    for (cmd, extra) in [("collab", None), ("compete", Some("--no-mind"))] {
        let mut args = vec![cmd, "--checkpoint", ckpt.to_str().unwrap(), "--iterations", "3"];
        args.extend(extra);
        let o = probe(tmp.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let collab = tmp.path().join("construction/collaborate/0/mind/curve.csv");
    assert_eq!(fs::read_to_string(collab).unwrap().lines().count(), 4);
    assert!(tmp.path().join("construction/compete/0/no_mind/final.bin").exists());

    let passing = final_checkpoint(&train_small(tmp.path(), "passing", 1));
    let o = probe(tmp.path(), &["collab", "--checkpoint", passing.to_str().unwrap(), "--iterations", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_single_cell_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "task = \"sorting\"\niterations = 2\n[eval]\nsettings = 3\n");
    let o = probe(tmp.path(), &["ablate", "--config", cfg.to_str().unwrap(), "--dims", "2", "--modes", "passive"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("suite "));
    let table = fs::read_to_string(tmp.path().join("sorting/ablation/ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}
