//! End-to-end checks of the command-line pipeline: every subcommand is
//! exercised through the real binary against small configurations, plus
//! the shipped experiment presets where they are cheap enough.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trs_oden::dataio::{load_checkpoint, read_trajectories};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trs-oden"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn shipped_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// A fast linear-oscillator setup: three jobs covering the plain model,
/// the Hamiltonian model, and the symmetry-regularized model.
fn tiny_config(dir: &Path, epochs: usize, learning_rate: f64) -> PathBuf {
    let text = format!(
        r#"{{
  "version": 1,
  "experiment": "tiny",
  "data": {{
    "source": "synthetic",
    "train": {{
      "system": {{ "kind": "duffing", "alpha": 1.0, "beta": 0.0, "gamma": 0.0, "delta": 0.0 }},
      "count": 3,
      "length": 21,
      "dt": 0.1,
      "sampler": {{ "kind": "annulus", "r_min": 0.2, "r_max": 1.0 }},
      "noise_sigma": 0.0,
      "seed": 11
    }},
    "test": {{
      "system": {{ "kind": "duffing", "alpha": 1.0, "beta": 0.0, "gamma": 0.0, "delta": 0.0 }},
      "count": 4,
      "length": 30,
      "dt": 0.1,
      "sampler": {{ "kind": "annulus", "r_min": 0.2, "r_max": 1.0 }},
      "noise_sigma": 0.0,
      "seed": 12
    }}
  }},
  "segment_max_len": 10,
  "training": {{
    "epochs": {epochs},
    "learning_rate": {learning_rate},
    "batch": {{ "mode": "full" }},
    "seed": 7
  }},
  "jobs": [
    {{ "name": "oden", "model": {{ "kind": "oden", "hidden": [6] }}, "solver": "rk4" }},
    {{ "name": "hoden", "model": {{ "kind": "hoden", "hidden": [6] }}, "solver": "leapfrog" }},
    {{
      "name": "trs_oden",
      "model": {{ "kind": "oden", "hidden": [6] }},
      "solver": "rk4",
      "reversing": {{ "kind": "momentum_flip" }},
      "lambda": {{ "kind": "constant", "value": 1.0 }}
    }}
  ]
}}
"#
    );
    let path = dir.join("tiny.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_exits_zero_and_lists_subcommands() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["generate", "train", "evaluate", "symmetry-check", "lyapunov", "report"] {
        assert!(text.contains(sub), "help is missing {sub}:\n{text}");
    }
}

#[test]
fn unknown_flags_exit_one() {
    let out = run(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_file_exits_one() {
    let out = run(&["generate", "--config", "/nonexistent/nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr_of(&out).is_empty());
}

#[test]
fn generate_writes_the_configured_trajectory_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let config = shipped_config("exp1.json");
    run_ok(&["generate", "--config", &config, "--out", out_a.to_str().unwrap()]);

    let train = read_trajectories(&out_a.join("train.csv")).unwrap();
    let test = read_trajectories(&out_a.join("test.csv")).unwrap();
    assert_eq!(train.len(), 50);
    assert_eq!(test.len(), 50);
    // 30 training transitions and 200 test transitions per trajectory.
    assert!(train.iter().all(|t| t.transitions() == 30 && t.dim() == 2));
    assert!(test.iter().all(|t| t.transitions() == 200 && t.dim() == 2));

    // Same config, fresh directory: byte-identical files.
    let out_b = dir.path().join("b");
    run_ok(&["generate", "--config", &config, "--out", out_b.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(out_a.join("train.csv")).unwrap(),
        std::fs::read(out_b.join("train.csv")).unwrap()
    );
}

#[test]
fn zero_epoch_training_writes_an_initialized_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 0, 1e-3);
    let out = dir.path().join("runs");
    run_ok(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--job",
        "oden",
    ]);
    let (model, meta) = load_checkpoint(&out.join("oden.ckpt")).unwrap();
    assert_eq!(meta.epochs_trained, 0);
    assert_eq!(meta.job, "oden");
    assert_eq!(meta.experiment, "tiny");
    assert_eq!(model.state_dim(), 2);
    let loss = std::fs::read_to_string(out.join("oden_loss.csv")).unwrap();
    assert_eq!(loss, "epoch,ode_loss,trs_loss,total_loss\n");
}

#[test]
fn train_evaluate_report_pipeline_produces_a_collated_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 25, 3e-3);
    let config = config.to_str().unwrap();
    let out = dir.path().join("runs");
    let out_str = out.to_str().unwrap();

    run_ok(&["train", "--config", config, "--out", out_str]);
    for job in ["oden", "hoden", "trs_oden"] {
        let loss_text = std::fs::read_to_string(out.join(format!("{job}_loss.csv"))).unwrap();
        let lines: Vec<&str> = loss_text.lines().collect();
        assert_eq!(lines.len(), 26, "{job}: header plus one row per epoch");
        let first: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        let last: f64 = lines[25].split(',').nth(3).unwrap().parse().unwrap();
        assert!(last < first, "{job}: loss went {first} -> {last}");
    }

    run_ok(&["evaluate", "--config", config, "--out", out_str]);
    for job in ["oden", "hoden", "trs_oden"] {
        let text = std::fs::read_to_string(out.join(format!("{job}_metrics.json"))).unwrap();
        let metrics: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(metrics["job"], job);
        assert_eq!(metrics["experiment"], "tiny");
        assert!(metrics["report"]["trajectory_mse"]["mean"].as_f64().unwrap().is_finite());
        assert!(metrics["report"]["energy_mse"]["mean"].as_f64().unwrap() >= 0.0);
    }

    run_ok(&["report", "--out", out_str]);
    let table = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "experiment,job,trajectory_mse_mean,trajectory_mse_std,energy_mse_mean,energy_mse_std,diverged_rollouts"
    );
    assert_eq!(lines.len(), 4, "header plus one row per job");
    // Rows are sorted by the metric file name.
    assert!(lines[1].starts_with("tiny,hoden,"));
    assert!(lines[2].starts_with("tiny,oden,"));
    assert!(lines[3].starts_with("tiny,trs_oden,"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 15, 3e-3);
    let config = config.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let out = out.to_str().unwrap();
        run_ok(&["train", "--config", config, "--out", out, "--job", "trs_oden"]);
        run_ok(&["evaluate", "--config", config, "--out", out, "--job", "trs_oden"]);
    }
    assert_eq!(
        std::fs::read(out_a.join("trs_oden.ckpt")).unwrap(),
        std::fs::read(out_b.join("trs_oden.ckpt")).unwrap()
    );
    assert_eq!(
        std::fs::read(out_a.join("trs_oden_metrics.json")).unwrap(),
        std::fs::read(out_b.join("trs_oden_metrics.json")).unwrap()
    );
}

#[test]
fn seed_override_changes_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 0, 1e-3);
    let config = config.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["train", "--config", config, "--out", out_a.to_str().unwrap(), "--job", "oden"]);
    run_ok(&[
        "train", "--config", config, "--out", out_b.to_str().unwrap(), "--job", "oden",
        "--seed", "99",
    ]);
    let (model_a, meta_a) = load_checkpoint(&out_a.join("oden.ckpt")).unwrap();
    let (model_b, meta_b) = load_checkpoint(&out_b.join("oden.ckpt")).unwrap();
    assert_eq!(meta_a.seed, 7);
    assert_eq!(meta_b.seed, 99);
    assert_ne!(model_a.flat_params(), model_b.flat_params());
}

#[test]
fn unknown_jobs_exit_one_and_name_the_roster() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 1, 1e-3);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("runs").to_str().unwrap(),
        "--job",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("nope") && err.contains("oden"), "{err}");
}

#[test]
fn checkpoints_from_other_jobs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 0, 1e-3);
    let config = config.to_str().unwrap();
    let out = dir.path().join("runs");
    let out_str = out.to_str().unwrap();
    run_ok(&["train", "--config", config, "--out", out_str, "--job", "oden"]);
    std::fs::copy(out.join("oden.ckpt"), out.join("trs_oden.ckpt")).unwrap();
    let result = run(&["evaluate", "--config", config, "--out", out_str, "--job", "trs_oden"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr_of(&result).contains("belongs to"), "{}", stderr_of(&result));
}

#[test]
fn non_finite_training_losses_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 5, 1e200);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("runs").to_str().unwrap(),
        "--job",
        "oden",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("epoch 1"), "{}", stderr_of(&out));
}

#[test]
fn symmetry_check_reports_energy_gaps_only_for_hamiltonian_models() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 5, 3e-3);
    let config = config.to_str().unwrap();
    let out = dir.path().join("runs");
    let out_str = out.to_str().unwrap();
    run_ok(&["train", "--config", config, "--out", out_str]);
    run_ok(&["symmetry-check", "--config", config, "--out", out_str]);

    let oden: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("oden_symmetry.json")).unwrap(),
    )
    .unwrap();
    assert!(oden["hamiltonian_gap"].is_null());
    assert!(oden["forward_backward"]["relative"].as_f64().unwrap().is_finite());
    // The plain model is diagnosed against the operator its regularized
    // sibling trains with.
    assert_eq!(oden["reversing"]["kind"], "momentum_flip");

    let hoden: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("hoden_symmetry.json")).unwrap(),
    )
    .unwrap();
    let gaps = hoden["hamiltonian_gap"]["gaps"].as_array().unwrap();
    assert_eq!(gaps.len(), 31);
    assert!(hoden["hamiltonian_gap"]["max_abs"].as_f64().unwrap().is_finite());
}

#[test]
fn lyapunov_writes_series_for_truth_and_trained_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 5, 3e-3);
    let config = config.to_str().unwrap();
    let out = dir.path().join("runs");
    let out_str = out.to_str().unwrap();

    run_ok(&["lyapunov", "--config", config, "--out", out_str, "--truth"]);
    let truth = std::fs::read_to_string(out.join("truth_lyapunov.csv")).unwrap();
    let lines: Vec<&str> = truth.lines().collect();
    assert_eq!(lines[0], "traj_id,t,sigma");
    // 4 test chains, 30 transitions each, one sigma per step taken.
    assert_eq!(lines.len(), 1 + 4 * 30);

    run_ok(&["train", "--config", config, "--out", out_str, "--job", "oden"]);
    run_ok(&["lyapunov", "--config", config, "--out", out_str, "--job", "oden"]);
    assert!(out.join("oden_lyapunov.csv").exists());

    let both = run(&["lyapunov", "--config", config, "--out", out_str]);
    assert_eq!(both.status.code(), Some(1), "needs --job or --truth");
}

#[test]
fn stand_in_pipeline_runs_from_generated_recording_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("recording.csv");
    let data_str = data.to_str().unwrap().to_owned();
    let out = dir.path().join("runs");
    let out_str = out.to_str().unwrap();

    let text = format!(
        r#"{{
  "version": 1,
  "experiment": "stand-in",
  "data": {{
    "source": "real_csv",
    "path": "unused/never_written.csv",
    "split_fraction": 0.6,
    "stand_in": {{
      "params": {{ "stiffness": 1.0, "coupling": 0.5, "damping": 0.05 }},
      "initial": [1.0, 0.0, 0.0, 0.5],
      "rows": 60,
      "dt": 0.1,
      "noise_sigma": 0.01,
      "seed": 42
    }}
  }},
  "segment_max_len": 10,
  "training": {{ "epochs": 10, "learning_rate": 3e-3, "batch": {{ "mode": "full" }}, "seed": 3 }},
  "jobs": [
    {{ "name": "oden", "model": {{ "kind": "oden", "hidden": [6] }}, "solver": "rk4" }}
  ]
}}
"#
    );
    let config = dir.path().join("standin.json");
    std::fs::write(&config, text).unwrap();
    let config = config.to_str().unwrap();

    run_ok(&["generate", "--config", config, "--data", &data_str]);
    assert!(data.exists());
    let first_line = std::fs::read_to_string(&data).unwrap();
    assert!(first_line.starts_with("t,q1,p1,q2,p2\n"));

    run_ok(&["train", "--config", config, "--out", out_str, "--data", &data_str]);
    run_ok(&["evaluate", "--config", config, "--out", out_str, "--data", &data_str]);
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("oden_metrics.json")).unwrap(),
    )
    .unwrap();
    // Measured data has no closed-form energy.
    assert!(metrics["report"]["energy_mse"].is_null());
    assert!(metrics["report"]["trajectory_mse"]["mean"].as_f64().unwrap().is_finite());
}
