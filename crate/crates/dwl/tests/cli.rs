use std::path::Path;
use std::process::Command;

use dwl::cli::run_from;
use dwl::commands::{ChannelReport, TerrainReport, TrajRow};
use dwl::config;
use dwl::manifest::Manifest;
use dwl::records::{read_rows, Table};
use dwl_core::dwl::UpdateMetrics;
use dwl_core::noise::NoiseConfig;

/// Small enough to train in well under a second per update.
const FAST: [&str; 14] = [
    "--set",
    "updates=3",
    "--set",
    "hyper.num_envs=4",
    "--set",
    "hyper.horizon=8",
    "--set",
    "net.gru_hidden=16",
    "--set",
    "task.episode_length=30",
    "--set",
    "eval.episode_length=30",
    "--set",
    "hyper.minibatches=2",
];

fn run(args: &[&str], out: &Path) -> i32 {
    let mut all = vec!["dwl", "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    run_from(all)
}

fn train_fast(out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["train"];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    run(&args, out)
}

#[test]
fn traj_paper_constraints_peak_at_mid_swing() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["traj", "--rate", "200"], dir.path()), 0);
    let rows: Vec<TrajRow> = read_rows(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), 101);
    let mid = rows.iter().find(|r| (r.t - 0.25).abs() < 1e-12).unwrap();
    assert!((mid.h - 0.1).abs() < 1e-9);
    let apex = rows.iter().map(|r| r.h).fold(f64::MIN, f64::max);
    assert!((apex - 0.1).abs() < 1e-3);
    let last = rows.last().unwrap();
    assert!((last.t - 0.5).abs() < 1e-12 && last.h.abs() < 1e-9 && last.v.abs() < 1e-9);
    let m = Manifest::read(dir.path()).unwrap();
    assert_eq!((m.command.as_str(), m.status.as_str()), ("traj", "ok"));
}

#[test]
fn traj_zero_and_arbitrary_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let zero = ["traj", "--v0", "0", "--acc0", "0", "--h-max", "0"];
    assert_eq!(run(&zero, dir.path()), 0);
    let rows: Vec<TrajRow> = read_rows(&dir.path().join("trajectory.csv")).unwrap();
    assert!(rows.iter().all(|r| r.h == 0.0 && r.v == 0.0 && r.a == 0.0));

    let args = [
        "traj", "--h0", "0.02", "--v0", "-0.3", "--acc0", "1.5", "--h-max", "0.15", "--h-swing", "0.05", "--v-swing",
        "0.2", "--duration", "0.8",
    ];
    assert_eq!(run(&args, dir.path()), 0);
    let rows: Vec<TrajRow> = read_rows(&dir.path().join("trajectory.csv")).unwrap();
    let (first, last) = (rows[0], *rows.last().unwrap());
    assert!((first.h - 0.02).abs() < 1e-9 && (first.v + 0.3).abs() < 1e-9 && (first.a - 1.5).abs() < 1e-9);
    assert!((last.t - 0.8).abs() < 1e-12 && (last.h - 0.05).abs() < 1e-9 && (last.v - 0.2).abs() < 1e-9);
    let mid = rows.iter().find(|r| (r.t - 0.4).abs() < 1e-12).unwrap();
    assert!((mid.h - 0.15).abs() < 1e-9);

    assert_eq!(run(&["traj", "--duration", "0"], dir.path()), 1);
    assert_eq!(run(&["traj", "--rate", "-1"], dir.path()), 1);
}

#[test]
fn randomize_check_counts_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["randomize-check", "-n", "0"], dir.path()), 0);
    let t = Table::read(&dir.path().join("randomize.csv")).unwrap();
    assert!(t.rows.is_empty());
    assert_eq!(t.header[0], "friction");

    assert_eq!(run(&["--profile", "paper", "randomize-check", "-n", "1000"], dir.path()), 0);
    let t = Table::read(&dir.path().join("randomize.csv")).unwrap();
    assert_eq!(t.rows.len(), 1000);
    let noise = NoiseConfig::default();
    for (name, spec) in dwl::commands::randomize_columns(&noise, 12) {
        let col = t.column(&name).unwrap();
        let lo = col.iter().cloned().fold(f64::MAX, f64::min);
        let hi = col.iter().cloned().fold(f64::MIN, f64::max);
        assert!(lo >= spec.lo && hi <= spec.hi, "{name}: [{lo}, {hi}]");
        let span = spec.hi - spec.lo;
        assert!(lo - spec.lo < 0.02 * span && spec.hi - hi < 0.02 * span, "{name} does not cover its range");
    }

    let point = ["--set", "env.noise.friction.lo=0.7", "--set", "env.noise.friction.hi=0.7", "randomize-check", "-n", "50"];
    assert_eq!(run(&point, dir.path()), 0);
    let t = Table::read(&dir.path().join("randomize.csv")).unwrap();
    assert!(t.column("friction").unwrap().iter().all(|x| *x == 0.7));

    let bad = ["--set", "env.noise.friction.lo=3", "randomize-check"];
    assert_eq!(run(&bad, dir.path()), 1);
}

#[test]
fn train_writes_outputs_and_replays_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(train_fast(a.path(), &[]), 0);
    assert_eq!(train_fast(b.path(), &[]), 0);
    assert_eq!(train_fast(c.path(), &["--workers", "3"]), 0);

    let ma: Vec<UpdateMetrics> = read_rows(&a.path().join("metrics.csv")).unwrap();
    let mb: Vec<UpdateMetrics> = read_rows(&b.path().join("metrics.csv")).unwrap();
    let mc: Vec<UpdateMetrics> = read_rows(&c.path().join("metrics.csv")).unwrap();
    assert_eq!(ma.iter().map(|m| m.update).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(ma.iter().zip(&mb).all(|(x, y)| x.same_numbers(y)));
    assert!(ma.iter().zip(&mc).all(|(x, y)| x.same_numbers(y)), "worker count changed the result");
    let ck = |d: &Path| std::fs::read(d.join("checkpoint.bin")).unwrap();
    assert_eq!(ck(a.path()), ck(b.path()));

    let manifest = Manifest::read(a.path()).unwrap();
    let cfg = config::load(&a.path().join("config.toml")).unwrap();
    assert_eq!(manifest.config_hash, config::config_hash(&cfg).unwrap());
    assert_eq!((manifest.seed, manifest.status.as_str()), (0, "ok"));
    assert_eq!(cfg.updates, 3);
}

#[test]
fn eval_and_estimate_read_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(train_fast(d, &[]), 0);
    let ck = d.join("checkpoint.bin");
    let ck = ck.to_str().unwrap();

    let ev = d.join("eval");
    let args = ["eval", "--checkpoint", ck, "--episodes", "2", "--terrain", "flat", "--terrain", "irregular"];
    assert_eq!(run(&args, &ev), 0);
    let reports: Vec<TerrainReport> = read_rows(&ev.join("eval_report.csv")).unwrap();
    assert_eq!(reports.iter().map(|r| r.terrain.as_str()).collect::<Vec<_>>(), ["flat", "irregular"]);
    assert!(reports.iter().all(|r| r.episodes == 2 && (0.0..=1.0).contains(&r.success_rate)));
    let replay = Table::read(&ev.join("replay.csv")).unwrap();
    let steps: f64 = reports.iter().map(|r| r.mean_length * r.episodes as f64).sum();
    assert_eq!(replay.rows.len() as f64, steps);

    assert_eq!(run(&["eval", "--checkpoint", ck, "--episodes", "0"], &ev), 0);
    let reports: Vec<TerrainReport> = read_rows(&ev.join("eval_report.csv")).unwrap();
    assert!(reports.is_empty());

    let mismatch = ["eval", "--checkpoint", ck, "--set", "net.gru_hidden=32"];
    assert_eq!(run(&mismatch, &ev), 1);
    assert_eq!(run(&["eval", "--checkpoint", "/nonexistent/ck.bin"], &ev), 1);
    assert_eq!(run(&["eval", "--terrain", "lava"], &ev), 1);

    let est = d.join("est");
    assert_eq!(run(&["estimate", "--checkpoint", ck, "--episodes", "2", "--steps", "20"], &est), 0);
    let reports: Vec<ChannelReport> = read_rows(&est.join("estimate_report.csv")).unwrap();
    let names: Vec<&str> = reports.iter().map(|r| r.channel.as_str()).collect();
    assert_eq!(names, ["forward_velocity", "base_lin_vel", "yaw", "feet_contact", "height_scan"]);
    let series = Table::read(&est.join("estimate_series.csv")).unwrap();
    assert!(series.rows.len() <= 40 && !series.rows.is_empty());
    assert!(series.column("forward_velocity_true").is_some() && series.column("forward_velocity_pred").is_some());
}

#[test]
fn baseline_checkpoint_cannot_estimate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(train_fast(dir.path(), &["--set", "net.variant=ppo_baseline", "--set", "updates=1"]), 0);
    let ck = dir.path().join("checkpoint.bin");
    assert_eq!(run(&["estimate", "--checkpoint", ck.to_str().unwrap()], &dir.path().join("e")), 1);
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let code = train_fast(dir.path(), &["--set", "hyper.learning_rate=1e300", "--set", "updates=4"]);
    assert_eq!(code, 2);
    assert_eq!(Manifest::read(dir.path()).unwrap().status, "diverged");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwl"))
}

#[test]
fn process_exit_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary().args(["--out", dir.path().to_str().unwrap(), "train", "--set", "hyper.gamma=2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hyper.gamma"));

    let out = binary().args(["train", "--set", "hyper.nonexistent=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hyper.nonexistent"));

    assert_eq!(binary().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(binary().arg("--version").output().unwrap().status.code(), Some(0));
    assert_eq!(binary().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(binary().args(["--profile", "huge", "traj"]).output().unwrap().status.code(), Some(1));
    assert_eq!(binary().args(["--workers", "0", "traj"]).output().unwrap().status.code(), Some(1));
}
