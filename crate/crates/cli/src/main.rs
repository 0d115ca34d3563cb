//! `rdrn`: generate data, train residual and regular autoencoder networks,
//! and run comparison, grid and shortcut-count studies.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdrn::data::{generate_simulated, load_features, Dataset, Task};
use rdrn::evaluation::{
    compare, grid_search, residual_sensitivity, run_experiment, ArmStatus, TrainedModel,
    NRMSE_DEFINITION,
};
use rdrn::network::ResidualMode;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("training did not converge: {0}")]
    NonConvergent(String),
}

impl CliError {
    pub fn from_core(e: rdrn::Error) -> Self {
        match e {
            rdrn::Error::NonFinite { .. } | rdrn::Error::NonFiniteValidation { .. } => {
                CliError::NonConvergent(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NonConvergent(_) => 3,
        }
    }
}

impl From<rdrn::Error> for CliError {
    fn from(e: rdrn::Error) -> Self {
        CliError::from_core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rdrn",
    version,
    about = "Nested-residual autoencoder experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the simulated regression dataset as CSV.
    Simulate {
        /// Number of rows.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network and write model, history and metrics.
    Train(RunArgs),
    /// Train residual and regular networks on the same splits for each seed.
    Compare(RunArgs),
    /// Full-factorial grid over the config's `grid` axes.
    Grid(RunArgs),
    /// Train with 0, 1, ..., all outermost shortcuts active.
    Sensitivity(RunArgs),
    /// Predict with a saved model.
    Predict {
        /// model.json written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// CSV with a header naming the model's feature columns.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Shortcuts: on, off, or the number of outermost pairs.
    #[arg(long, value_parser = parse_residual)]
    residual: Option<ResidualMode>,
}

fn parse_residual(s: &str) -> Result<ResidualMode, String> {
    ResidualMode::parse(s).map_err(|e| e.to_string())
}

/// Config, dataset and output directory of a run, with overrides applied.
struct Prepared {
    config: ExperimentConfig,
    dataset: Dataset,
    out: PathBuf,
}

impl RunArgs {
    fn prepare(&self) -> Result<Prepared, CliError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.n_seeds {
            config.n_seeds = n;
        }
        if let Some(r) = self.residual {
            config.network.residual = r;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        let base = self.config.parent().unwrap_or(Path::new("."));
        config.dataset = config.dataset.rebased(base);
        let dataset = config.dataset.load()?;
        let config = config.resolved(&dataset)?;
        let out = config.output_dir.clone();
        fs::create_dir_all(&out)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
        write_json(&out.join("config.json"), &config)?;
        Ok(Prepared {
            config,
            dataset,
            out,
        })
    }
}

/// Result file body together with the config and seed that produced it.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    seed: u64,
    config: serde_json::Value,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_artifact<T: Serialize>(
    path: &Path,
    cfg: &ExperimentConfig,
    body: &T,
) -> Result<(), CliError> {
    write_json(
        path,
        &Artifact {
            seed: cfg.seed,
            config: cfg.echo(),
            body,
        },
    )
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(n: u64, seed: u64, out: &Path) -> Result<(), CliError> {
    let ds = generate_simulated(n as usize, seed)?;
    ds.write_csv(out)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {n} rows to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    parameter_count: usize,
    active_shortcuts: usize,
    best_epoch: usize,
    epochs_run: usize,
    validation: &'a rdrn::evaluation::Metrics,
    test: &'a rdrn::evaluation::Metrics,
    nrmse_definition: &'static str,
    dataset: rdrn::data::DatasetManifest,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    split: &'a rdrn::data::SplitIndices,
    /// Test predictions in target units, one row per test index.
    test_predictions: Vec<Vec<f64>>,
}

fn cmd_train(args: &RunArgs) -> Result<(), CliError> {
    let Prepared {
        config,
        dataset,
        out,
    } = args.prepare()?;
    let (data, outcome) = run_experiment(&dataset, &config.run_config(), config.seed)?;
    let net = outcome.model.network();
    outcome.model.save(&out.join("model.json"))?;
    outcome
        .history
        .write_csv(create(&out.join("history.csv"))?)?;
    let metrics = TrainMetrics {
        parameter_count: net.count_parameters(),
        active_shortcuts: net.spec().residual.active_count(net.available_shortcuts()),
        best_epoch: outcome.history.best_epoch,
        epochs_run: outcome.history.epochs.len(),
        validation: &outcome.validation,
        test: &outcome.test,
        nrmse_definition: NRMSE_DEFINITION,
        dataset: dataset.manifest(),
    };
    write_artifact(&out.join("metrics.json"), &config, &metrics)?;
    let p = &outcome.test_predictions;
    let report = TrainReport {
        split: &data.split,
        test_predictions: (0..p.rows()).map(|r| p.row(r).to_vec()).collect(),
    };
    write_artifact(&out.join("report.json"), &config, &report)?;
    println!(
        "test {}: {:.4} ({} parameters, best epoch {})",
        if dataset.task.is_classification() {
            "accuracy"
        } else {
            "R2"
        },
        outcome.test.headline().unwrap_or(f64::NAN),
        metrics.parameter_count,
        metrics.best_epoch
    );
    Ok(())
}

/// Studies only fail when nothing converged.
fn check_converged<'a>(runs: impl IntoIterator<Item = &'a ArmStatus>) -> Result<(), CliError> {
    let mut total = 0;
    let mut failed = 0;
    for s in runs {
        total += 1;
        if let ArmStatus::NonConvergent { .. } = s {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("warning: {failed} of {total} runs did not converge");
    }
    if total > 0 && failed == total {
        return Err(CliError::NonConvergent("no run converged".into()));
    }
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<(), CliError> {
    let p = args.prepare()?;
    let report = compare(
        &p.dataset,
        &p.config.run_config(),
        p.config.n_seeds,
        p.config.seed,
    )?;
    write_artifact(&p.out.join("report.json"), &p.config, &report)?;
    report.write_csv(create(&p.out.join("runs.csv"))?)?;
    let mean = |s: &rdrn::evaluation::ArmSummary| s.test.headline().unwrap_or(f64::NAN);
    println!(
        "mean test metric over {} seeds: residual {:.4}, regular {:.4}",
        report.n_seeds,
        mean(&report.residual),
        mean(&report.regular)
    );
    check_converged(report.runs.iter().map(|r| &r.status))
}

fn cmd_grid(args: &RunArgs) -> Result<(), CliError> {
    let p = args.prepare()?;
    let report = grid_search(
        &p.dataset,
        &p.config.run_config(),
        &p.config.grid,
        p.config.n_seeds,
        p.config.seed,
    )?;
    write_artifact(&p.out.join("report.json"), &p.config, &report)?;
    report.write_csv(create(&p.out.join("grid.csv"))?)?;
    for (i, curve) in report.batch_curves().iter().enumerate() {
        let name = format!("batch_curve_{i}_{}.csv", curve.label());
        curve.write_csv(create(&p.out.join(name))?)?;
    }
    if let Some(best) = report.best() {
        println!(
            "best: batch {} nodes {:?} {} {} (mean validation {:.4})",
            best.batch_size,
            best.nnode,
            best.activation,
            best.residual,
            best.score().unwrap_or(f64::NAN)
        );
    }
    check_converged(
        report
            .cells
            .iter()
            .flat_map(|c| c.runs.iter().map(|r| &r.status)),
    )
}

fn cmd_sensitivity(args: &RunArgs) -> Result<(), CliError> {
    let p = args.prepare()?;
    let report = residual_sensitivity(
        &p.dataset,
        &p.config.run_config(),
        p.config.n_seeds,
        p.config.seed,
    )?;
    write_artifact(&p.out.join("report.json"), &p.config, &report)?;
    report.write_csv(create(&p.out.join("sensitivity.csv"))?)?;
    for (row, v) in report.rows.iter().zip(report.headline()) {
        println!("{} shortcuts: {:.4}", row.shortcuts, v.unwrap_or(f64::NAN));
    }
    check_converged(
        report
            .rows
            .iter()
            .flat_map(|r| r.runs.iter().map(|r| &r.status)),
    )
}

fn cmd_predict(
    model: &Path,
    input: &Path,
    out: Option<&Path>,
    delimiter: char,
) -> Result<(), CliError> {
    let model = TrainedModel::load(model)?;
    if model.feature_names.is_empty() {
        return Err(CliError::Usage("model has no feature names".into()));
    }
    let x = load_features(input, &model.feature_names, delimiter)?;
    let p = model.predict(&x)?;
    let header: Vec<String> = match model.task {
        Task::Regression if model.target_names.len() == p.cols() => model.target_names.clone(),
        Task::Regression => (0..p.cols()).map(|j| format!("y{j}")).collect(),
        Task::Classification { .. } => (0..p.cols())
            .map(|j| format!("p{j}"))
            .chain(["class".to_string()])
            .collect(),
    };
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..p.rows() {
        let mut row: Vec<String> = p.row(r).iter().map(f64::to_string).collect();
        if model.task.is_classification() {
            row.push(rdrn::evaluation::argmax(p.row(r)).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(w.flush()?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { n, seed, out } => cmd_simulate(*n, *seed, out),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Predict {
            model,
            input,
            out,
            delimiter,
        } => cmd_predict(model, input, out.as_deref(), *delimiter),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
