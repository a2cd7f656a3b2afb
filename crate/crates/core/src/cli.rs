//! Command-line surface. Subcommands cover the whole pipeline: dataset
//! export, training, rollout evaluation, symmetry diagnostics, Lyapunov
//! series, and collation of metric files into a single table.
//!
//! Exit codes: 0 on success, 1 on any validation or I/O failure, 2 when
//! training aborts on a non-finite loss.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig, JobConfig};
use crate::dataio::{
    ingest_real_data, load_checkpoint, save_checkpoint, write_stand_in_csv, write_trajectories,
    CheckpointMeta,
};
use crate::dynamics::{generate_dataset, split_trajectories};
use crate::error::{Error, Result};
use crate::integrators::{SolverConfig, Trajectory, VectorField};
use crate::losses::ReversingOperator;
use crate::metrics::{
    forward_backward_relative_error, hamiltonian_symmetry_gap, lyapunov_exponent,
    EnergyFunction, ForwardBackwardError, MetricReport, SymmetryGap,
};
use crate::models::Model;
use crate::train::{evaluate, train, EpochRecord, TrainSettings};

#[derive(Parser)]
#[command(
    name = "trs-oden",
    version,
    about = "Learns continuous-time dynamics from noisy trajectories, with an optional time-reversal-symmetry penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured datasets to disk: train/test trajectory CSVs
    /// for synthetic sources, the stand-in recording for measured ones
    Generate(CommonArgs),
    /// Train the configured jobs and write checkpoints plus loss history
    Train(TrainArgs),
    /// Roll trained models out over the test set and write metric JSON
    Evaluate(JobScopedArgs),
    /// Measure forward/backward consistency and learned-energy symmetry
    SymmetryCheck(JobScopedArgs),
    /// Write finite-time Lyapunov exponent series over the test horizon
    Lyapunov(LyapunovArgs),
    /// Collate per-job metric JSON files into one CSV table
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measured-data CSV location (overrides the config's path)
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Train only this job instead of every job in the config
    #[arg(long)]
    job: Option<String>,
    /// Override the training seed (model init and minibatch shuffling)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct JobScopedArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict to this job instead of every job in the config
    #[arg(long)]
    job: Option<String>,
}

#[derive(Args)]
struct LyapunovArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Use this trained job's field
    #[arg(long, conflicts_with = "truth")]
    job: Option<String>,
    /// Use the configured system's exact field instead of a checkpoint
    #[arg(long)]
    truth: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding *_metrics.json files
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI; returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    let argv = std::iter::once("trs-oden".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but are not
            // failures.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::NumericAbort { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => run_generate(&args),
        Command::Train(args) => run_train(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::SymmetryCheck(args) => run_symmetry_check(&args),
        Command::Lyapunov(args) => run_lyapunov(&args),
        Command::Report(args) => run_report(&args),
    }
}

fn resolve_out(config: &ExperimentConfig, cli_out: &Option<PathBuf>) -> PathBuf {
    match (cli_out, &config.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => Path::new("runs").join(&config.experiment),
    }
}

fn selected_jobs<'a>(
    config: &'a ExperimentConfig,
    name: &Option<String>,
) -> Result<Vec<&'a JobConfig>> {
    match name {
        Some(n) => Ok(vec![config.job(n)?]),
        None => Ok(config.jobs.iter().collect()),
    }
}

struct PreparedData {
    train_segments: Vec<Trajectory>,
    test: Vec<Trajectory>,
    energy: Option<EnergyFunction>,
}

/// Materializes the experiment's data. Synthetic sources are regenerated
/// from their seeds (training sees the noisy draw, evaluation the clean
/// one); measured sources are ingested, normalized, and split.
fn prepare_data(config: &ExperimentConfig, data_override: &Option<PathBuf>) -> Result<PreparedData> {
    match &config.data {
        DataConfig::Synthetic { train, test } => {
            let train_set = generate_dataset(train)?;
            let test_set = generate_dataset(test)?;
            Ok(PreparedData {
                train_segments: split_trajectories(&train_set.noisy, config.segment_max_len)?,
                test: test_set.clean,
                energy: config.data.energy_function(),
            })
        }
        DataConfig::RealCsv { path, split_fraction, .. } => {
            let path = data_override.clone().unwrap_or_else(|| PathBuf::from(path));
            let ingest = ingest_real_data(&path, *split_fraction, config.segment_max_len)?;
            Ok(PreparedData {
                train_segments: ingest.train_segments,
                test: vec![ingest.test],
                energy: None,
            })
        }
    }
}

fn checkpoint_path(out: &Path, job: &str) -> PathBuf {
    out.join(format!("{job}.ckpt"))
}

/// Loads a job's checkpoint and cross-checks it against the config, so a
/// file from another experiment or job cannot be evaluated silently.
fn load_job_checkpoint(out: &Path, config: &ExperimentConfig, job: &JobConfig) -> Result<Model> {
    let path = checkpoint_path(out, &job.name);
    let (model, meta) = load_checkpoint(&path)?;
    if meta.job != job.name || meta.experiment != config.experiment {
        return Err(Error::InvalidData(format!(
            "{}: checkpoint belongs to experiment {:?} job {:?}, expected {:?}/{:?}",
            path.display(),
            meta.experiment,
            meta.job,
            config.experiment,
            job.name
        )));
    }
    let expected = config.data.state_dim();
    if model.state_dim() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{}: checkpoint state dimension {} does not match the configured data ({expected})",
            path.display(),
            model.state_dim()
        )));
    }
    Ok(model)
}

fn run_generate(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    match &config.data {
        DataConfig::Synthetic { train, test } => {
            let out = resolve_out(&config, &args.out);
            std::fs::create_dir_all(&out)?;
            let train_set = generate_dataset(train)?;
            let test_set = generate_dataset(test)?;
            let train_path = out.join("train.csv");
            let test_path = out.join("test.csv");
            write_trajectories(&train_path, &train_set.noisy)?;
            write_trajectories(&test_path, &test_set.clean)?;
            println!(
                "wrote {} noisy training trajectories to {} and {} clean test trajectories to {}",
                train_set.noisy.len(),
                train_path.display(),
                test_set.clean.len(),
                test_path.display()
            );
        }
        DataConfig::RealCsv { path, stand_in, .. } => {
            let Some(spec) = stand_in else {
                return Err(Error::InvalidConfig(
                    "this config reads a measured recording and has no stand_in block; \
                     there is nothing to generate"
                        .into(),
                ));
            };
            let path = args.data.clone().unwrap_or_else(|| PathBuf::from(path));
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_stand_in_csv(&path, spec)?;
            println!("wrote a {}-row stand-in recording to {}", spec.rows, path.display());
        }
    }
    Ok(())
}

fn write_loss_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from("epoch,ode_loss,trs_loss,total_loss\n");
    for record in history {
        text.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            record.epoch, record.ode_loss, record.trs_loss, record.total_loss
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.common.config)?;
    let jobs = selected_jobs(&config, &args.job)?;
    let out = resolve_out(&config, &args.common.out);
    std::fs::create_dir_all(&out)?;
    let data = prepare_data(&config, &args.common.data)?;
    for job in jobs {
        let seed = args.seed.unwrap_or(config.training.seed);
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let model = job.model.build(config.data.state_dim(), &mut init_rng)?;
        let mut settings = TrainSettings::from_job(job, &config.training);
        settings.seed = seed;
        let outcome = train(&model, &data.train_segments, &settings)?;
        let meta = CheckpointMeta {
            experiment: config.experiment.clone(),
            job: job.name.clone(),
            seed,
            epochs_trained: outcome.history.len(),
        };
        save_checkpoint(&checkpoint_path(&out, &job.name), &outcome.model, &meta)?;
        write_loss_history(&out.join(format!("{}_loss.csv", job.name)), &outcome.history)?;
        match outcome.history.last() {
            Some(last) => println!(
                "job {}: {} epochs, final total loss {:.6e}",
                job.name,
                outcome.history.len(),
                last.total_loss
            ),
            None => println!("job {}: 0 epochs, wrote the initialized model", job.name),
        }
    }
    Ok(())
}

/// One job's evaluation results, written as `{job}_metrics.json` and read
/// back by `report`.
#[derive(Debug, Serialize, Deserialize)]
struct JobMetrics {
    experiment: String,
    job: String,
    report: MetricReport,
}

fn run_evaluate(args: &JobScopedArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.common.config)?;
    let jobs = selected_jobs(&config, &args.job)?;
    let out = resolve_out(&config, &args.common.out);
    let data = prepare_data(&config, &args.common.data)?;
    for job in jobs {
        let model = load_job_checkpoint(&out, &config, job)?;
        let report = evaluate(&model.field(), &data.test, job.solver, data.energy.as_ref())?;
        println!(
            "job {}: trajectory mse {:.6e} (std {:.6e}), {} diverged rollouts",
            job.name, report.trajectory_mse.mean, report.trajectory_mse.std, report.diverged_rollouts
        );
        let metrics = JobMetrics {
            experiment: config.experiment.clone(),
            job: job.name.clone(),
            report,
        };
        let mut text = serde_json::to_string_pretty(&metrics)?;
        text.push('\n');
        std::fs::write(out.join(format!("{}_metrics.json", job.name)), text)?;
    }
    Ok(())
}

/// The operator the experiment's symmetry-regularized jobs train against,
/// used to diagnose every job on equal footing. Falls back to the
/// momentum flip when no job declares one.
fn canonical_reversing(config: &ExperimentConfig) -> ReversingOperator {
    config
        .jobs
        .iter()
        .find_map(|j| j.reversing.clone())
        .unwrap_or_else(ReversingOperator::momentum_flip)
}

#[derive(Debug, Serialize)]
struct SymmetryDiagnostics {
    experiment: String,
    job: String,
    reversing: ReversingOperator,
    forward_backward: ForwardBackwardError,
    /// Learned-energy asymmetry over a momentum grid; only separable
    /// Hamiltonian models have one.
    hamiltonian_gap: Option<SymmetryGap>,
}

fn run_symmetry_check(args: &JobScopedArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.common.config)?;
    let jobs = selected_jobs(&config, &args.job)?;
    let out = resolve_out(&config, &args.common.out);
    let data = prepare_data(&config, &args.common.data)?;
    let initials: Vec<_> = data.test.iter().map(|t| t.state(0).clone()).collect();
    let steps = data.test[0].transitions();
    let step = data.test[0].dts()[0];
    for job in jobs {
        let model = load_job_checkpoint(&out, &config, job)?;
        let reversing = job.reversing.clone().unwrap_or_else(|| canonical_reversing(&config));
        let solver = SolverConfig { method: job.solver, step };
        let forward_backward =
            forward_backward_relative_error(&model.field(), &initials, steps, &reversing, &solver)?;
        let hamiltonian_gap = match &model {
            Model::Hoden(hoden) => {
                // Fixed q = 0, every momentum component swept together
                // from 0 to 1.5.
                let half = model.state_dim() / 2;
                let q = vec![0.0; half];
                let p_grid: Vec<Vec<f64>> =
                    (0..=30).map(|i| vec![1.5 * i as f64 / 30.0; half]).collect();
                Some(hamiltonian_symmetry_gap(hoden, &q, &p_grid, 0.0)?)
            }
            Model::Oden(_) => None,
        };
        println!(
            "job {}: forward/backward relative error {:.6e}{}",
            job.name,
            forward_backward.relative,
            match &hamiltonian_gap {
                Some(gap) => format!(", max energy asymmetry {:.6e}", gap.max_abs),
                None => String::new(),
            }
        );
        let diagnostics = SymmetryDiagnostics {
            experiment: config.experiment.clone(),
            job: job.name.clone(),
            reversing,
            forward_backward,
            hamiltonian_gap,
        };
        let mut text = serde_json::to_string_pretty(&diagnostics)?;
        text.push('\n');
        std::fs::write(out.join(format!("{}_symmetry.json", job.name)), text)?;
    }
    Ok(())
}

fn run_lyapunov(args: &LyapunovArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.common.config)?;
    let out = resolve_out(&config, &args.common.out);
    std::fs::create_dir_all(&out)?;
    let data = prepare_data(&config, &args.common.data)?;
    let (field, label): (Box<dyn VectorField>, String) = if args.truth {
        let DataConfig::Synthetic { test, .. } = &config.data else {
            return Err(Error::InvalidConfig(
                "--truth needs a synthetic data source with a known field".into(),
            ));
        };
        (test.system.build_field(), "truth".into())
    } else {
        let Some(name) = &args.job else {
            return Err(Error::InvalidConfig("pass --job NAME or --truth".into()));
        };
        let job = config.job(name)?;
        let model = load_job_checkpoint(&out, &config, job)?;
        (Box::new(OwnedModelField(model)), name.clone())
    };
    let steps = data.test[0].transitions();
    let solver = SolverConfig {
        method: crate::integrators::SolveMethod::Rk4,
        step: data.test[0].dts()[0],
    };
    let mut direction = vec![0.0; config.data.state_dim()];
    direction[0] = 1.0;
    let mut rows = String::from("traj_id,t,sigma\n");
    let mut kept = 0;
    for (i, trajectory) in data.test.iter().enumerate() {
        match lyapunov_exponent(field.as_ref(), trajectory.state(0), steps, &solver, 1e-8, &direction)
        {
            Ok(series) => {
                for (t, sigma) in series.times.iter().zip(&series.sigma) {
                    rows.push_str(&format!("{i},{t:.16e},{sigma:.16e}\n"));
                }
                kept += 1;
            }
            Err(Error::Diverged { step, .. }) => {
                eprintln!("warning: chain from test state {i} diverged at step {step}; skipped");
            }
            Err(e) => return Err(e),
        }
    }
    if kept == 0 {
        return Err(Error::InvalidData("every chain diverged; nothing to write".into()));
    }
    let path = out.join(format!("{label}_lyapunov.csv"));
    std::fs::write(&path, rows)?;
    println!("wrote exponent series for {kept} of {} chains to {}", data.test.len(), path.display());
    Ok(())
}

/// A model field that owns its model, for rollouts independent of the
/// checkpoint loading scope.
struct OwnedModelField(Model);

impl VectorField for OwnedModelField {
    fn dim(&self) -> usize {
        self.0.state_dim()
    }

    fn is_autonomous(&self) -> bool {
        self.0.field().is_autonomous()
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.0.field().eval(x, t)
    }

    fn kinetic_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.0.field().kinetic_grad(p)
    }

    fn potential_grad(&self, q: &[f64]) -> Option<Vec<f64>> {
        self.0.field().potential_grad(q)
    }
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(&args.out)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with("_metrics.json") {
            names.push(name);
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidData(format!(
            "no *_metrics.json files in {}",
            args.out.display()
        )));
    }
    names.sort();
    let mut table = String::from(
        "experiment,job,trajectory_mse_mean,trajectory_mse_std,energy_mse_mean,energy_mse_std,diverged_rollouts\n",
    );
    let mut rows = 0;
    for name in &names {
        let text = std::fs::read_to_string(args.out.join(name))?;
        let metrics: JobMetrics = serde_json::from_str(&text)?;
        let energy = match &metrics.report.energy_mse {
            Some(e) => format!("{:.16e},{:.16e}", e.mean, e.std),
            None => ",".into(),
        };
        table.push_str(&format!(
            "{},{},{:.16e},{:.16e},{},{}\n",
            metrics.experiment,
            metrics.job,
            metrics.report.trajectory_mse.mean,
            metrics.report.trajectory_mse.std,
            energy,
            metrics.report.diverged_rollouts
        ));
        rows += 1;
    }
    let path = args.out.join("report.csv");
    std::fs::write(&path, table)?;
    println!("wrote {rows} rows to {}", path.display());
    Ok(())
}
