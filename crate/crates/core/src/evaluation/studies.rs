use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_prepared, PreparedData, RunConfig, RunOutcome};
use super::metrics::Metrics;
use crate::data::Dataset;
use crate::layers::ActivationKind;
use crate::network::{build_rdrn, NetworkSpec, OutputOption, ResidualMode};
use crate::{Error, Result};

/// Seed of repetition `s`: `base + s`.
pub fn seed_for(base: u64, s: usize) -> u64 {
    base.wrapping_add(s as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ArmStatus {
    Converged,
    /// Training aborted on a non-finite loss.
    NonConvergent {
        message: String,
    },
}

/// One trained network in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub seed: u64,
    pub arm: String,
    pub active_shortcuts: usize,
    pub parameter_count: usize,
    #[serde(flatten)]
    pub status: ArmStatus,
    pub validation: Option<Metrics>,
    pub test: Option<Metrics>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub test_indices: Vec<usize>,
    /// Row-major test predictions in target units.
    pub test_predictions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        Some(Spread {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Mean and range of each metric over the converged runs of one arm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub r2: Option<Spread>,
    pub rmse: Option<Spread>,
    pub nrmse: Option<Spread>,
    pub accuracy: Option<Spread>,
    pub cross_entropy: Option<Spread>,
    pub auc: Option<Spread>,
}

impl MetricSummary {
    pub fn of<'a>(metrics: impl IntoIterator<Item = &'a Metrics> + Clone) -> MetricSummary {
        let collect = |f: fn(&Metrics) -> Option<f64>| {
            let v: Vec<f64> = metrics.clone().into_iter().filter_map(f).collect();
            Spread::of(&v)
        };
        MetricSummary {
            r2: collect(|m| m.r2),
            rmse: collect(|m| m.rmse),
            nrmse: collect(|m| m.nrmse),
            accuracy: collect(|m| m.accuracy),
            cross_entropy: collect(|m| m.cross_entropy),
            auc: collect(|m| m.auc),
        }
    }

    /// Mean R² for regression, mean accuracy for classification.
    pub fn headline(&self) -> Option<f64> {
        self.r2.or(self.accuracy).map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub converged: usize,
    pub non_convergent: usize,
    pub validation: MetricSummary,
    pub test: MetricSummary,
}

impl ArmSummary {
    pub fn of(arm: &str, runs: &[&ArmRun]) -> ArmSummary {
        let ok: Vec<&&ArmRun> = runs
            .iter()
            .filter(|r| r.status == ArmStatus::Converged)
            .collect();
        ArmSummary {
            arm: arm.to_string(),
            converged: ok.len(),
            non_convergent: runs.len() - ok.len(),
            validation: MetricSummary::of(ok.iter().filter_map(|r| r.validation.as_ref())),
            test: MetricSummary::of(ok.iter().filter_map(|r| r.test.as_ref())),
        }
    }
}

struct Job {
    arm: String,
    shortcuts: ResidualMode,
    cfg: RunConfig,
}

fn run_job(job: &Job, data: &PreparedData, seed: u64, keep_predictions: bool) -> Result<ArmRun> {
    let full = build_rdrn(&job.cfg.network, seed)?;
    let active = job.shortcuts.active_count(full.available_shortcuts());
    let mut run = ArmRun {
        seed,
        arm: job.arm.clone(),
        active_shortcuts: active,
        parameter_count: full.count_parameters(),
        status: ArmStatus::Converged,
        validation: None,
        test: None,
        best_epoch: None,
        epochs_run: None,
        test_indices: data.split.test.clone(),
        test_predictions: None,
    };
    match run_prepared(data, &job.cfg, job.shortcuts, seed) {
        Ok(RunOutcome {
            history,
            validation,
            test,
            test_predictions,
            ..
        }) => {
            run.validation = Some(validation);
            run.test = Some(test);
            run.best_epoch = Some(history.best_epoch);
            run.epochs_run = Some(history.epochs.len());
            if keep_predictions {
                run.test_predictions = Some(
                    (0..test_predictions.rows())
                        .map(|r| test_predictions.row(r).to_vec())
                        .collect(),
                );
            }
        }
        Err(e @ (Error::NonFinite { .. } | Error::NonFiniteValidation { .. })) => {
            run.status = ArmStatus::NonConvergent {
                message: e.to_string(),
            };
        }
        Err(e) => return Err(e),
    }
    Ok(run)
}

/// Runs every job for each of `n_seeds` seeds. Jobs sharing a seed share one
/// split. Independent jobs run in parallel; results keep job order.
fn run_jobs(
    ds: &Dataset,
    jobs: &[Job],
    n_seeds: usize,
    base_seed: u64,
    stratify: bool,
    keep_predictions: bool,
) -> Result<Vec<ArmRun>> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be at least 1".into()));
    }
    let prepared = (0..n_seeds)
        .into_par_iter()
        .map(|s| PreparedData::for_seed(ds, seed_for(base_seed, s), stratify))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, &Job)> = (0..n_seeds)
        .flat_map(|s| jobs.iter().map(move |j| (s, j)))
        .collect();
    tasks
        .par_iter()
        .map(|&(s, job)| run_job(job, &prepared[s], seed_for(base_seed, s), keep_predictions))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
    /// Residual and regular run per seed, in seed order.
    pub runs: Vec<ArmRun>,
    pub residual: ArmSummary,
    pub regular: ArmSummary,
    /// Definition used for the `nrmse` fields.
    pub nrmse_definition: String,
}

pub const NRMSE_DEFINITION: &str = "rmse / (max(y) - min(y)) over the evaluated rows";

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_runs_csv(&self.runs, out)
    }
}

/// Flat table of runs: one row per trained network.
pub fn write_runs_csv<W: Write>(runs: &[ArmRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "arm",
        "active_shortcuts",
        "parameter_count",
        "status",
        "val_r2",
        "val_rmse",
        "val_accuracy",
        "test_r2",
        "test_rmse",
        "test_nrmse",
        "test_accuracy",
        "test_cross_entropy",
        "test_auc",
    ])?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in runs {
        let val = r.validation.clone().unwrap_or_default();
        let test = r.test.clone().unwrap_or_default();
        let status = match r.status {
            ArmStatus::Converged => "converged",
            ArmStatus::NonConvergent { .. } => "non_convergent",
        };
        w.write_record([
            r.seed.to_string(),
            r.arm.clone(),
            r.active_shortcuts.to_string(),
            r.parameter_count.to_string(),
            status.to_string(),
            f(val.r2),
            f(val.rmse),
            f(val.accuracy),
            f(test.r2),
            f(test.rmse),
            f(test.nrmse),
            f(test.accuracy),
            f(test.cross_entropy),
            f(test.auc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Residual arm shortcut setting: the spec's own unless it is off.
fn residual_arm(spec: &NetworkSpec) -> ResidualMode {
    match spec.residual {
        ResidualMode::Off => ResidualMode::Full,
        other => other,
    }
}

/// Trains residual and regular networks on identical splits, seeds and
/// initial parameters for `n_seeds` seeds `base_seed, base_seed + 1, …`.
pub fn compare(
    ds: &Dataset,
    cfg: &RunConfig,
    n_seeds: usize,
    base_seed: u64,
) -> Result<ComparisonReport> {
    let cfg = cfg.fitted_to(ds);
    cfg.network.validate()?;
    cfg.resolved_loss(ds.task)?;
    let jobs = [
        Job {
            arm: "residual".into(),
            shortcuts: residual_arm(&cfg.network),
            cfg: cfg.clone(),
        },
        Job {
            arm: "regular".into(),
            shortcuts: ResidualMode::Off,
            cfg: cfg.clone(),
        },
    ];
    let runs = run_jobs(ds, &jobs, n_seeds, base_seed, cfg.stratify, true)?;
    let pick = |arm: &str| -> Vec<&ArmRun> { runs.iter().filter(|r| r.arm == arm).collect() };
    Ok(ComparisonReport {
        n_seeds,
        seeds: (0..n_seeds).map(|s| seed_for(base_seed, s)).collect(),
        residual: ArmSummary::of("residual", &pick("residual")),
        regular: ArmSummary::of("regular", &pick("regular")),
        config: cfg,
        runs,
        nrmse_definition: NRMSE_DEFINITION.into(),
    })
}

/// Axes of a full-factorial grid. An empty axis keeps the template value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub node_lists: Vec<Vec<usize>>,
    pub activations: Vec<ActivationKind>,
    pub output_options: Vec<OutputOption>,
    /// Shortcut settings to evaluate; empty means residual and regular.
    pub residual: Vec<ResidualMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub batch_size: usize,
    pub nnode: Vec<usize>,
    pub activation: ActivationKind,
    pub output_option: OutputOption,
    pub residual: ResidualMode,
    pub parameter_count: usize,
    pub validation: ArmSummary,
    pub test: MetricSummary,
    pub runs: Vec<ArmRun>,
}

impl GridCell {
    /// Mean validation R² (or accuracy); `None` when no seed converged.
    pub fn score(&self) -> Option<f64> {
        self.validation.validation.headline()
    }

    fn arm_label(residual: ResidualMode) -> String {
        match residual {
            ResidualMode::Off => "regular".into(),
            ResidualMode::Full => "residual".into(),
            ResidualMode::Outermost(n) => format!("residual_{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCurve {
    pub nnode: Vec<usize>,
    pub activation: ActivationKind,
    pub output_option: OutputOption,
    pub residual: ResidualMode,
    /// `(batch_size, mean validation metric)` in ascending batch size.
    pub points: Vec<(usize, Option<f64>)>,
}

impl BatchCurve {
    pub fn label(&self) -> String {
        GridCell::arm_label(self.residual)
    }

    /// Batch size with the best mean validation metric.
    pub fn argmax(&self) -> Option<usize> {
        self.points
            .iter()
            .filter_map(|&(b, v)| v.map(|v| (b, v)))
            .fold(None, |best: Option<(usize, f64)>, (b, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((b, v)),
            })
            .map(|(b, _)| b)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["batch_size", "mean_val_r2"])?;
        for (b, v) in &self.points {
            w.write_record([b.to_string(), v.map(|x| x.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid: GridSpec,
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    pub template: RunConfig,
    pub cells: Vec<GridCell>,
    /// Indices into `cells`, best first.
    pub ranking: Vec<usize>,
}

impl GridReport {
    pub fn best(&self) -> Option<&GridCell> {
        self.ranking.first().map(|&i| &self.cells[i])
    }

    /// One validation-metric curve over batch size per combination of the
    /// other axes.
    pub fn batch_curves(&self) -> Vec<BatchCurve> {
        let mut curves: Vec<BatchCurve> = Vec::new();
        for c in &self.cells {
            let point = (c.batch_size, c.score());
            match curves.iter_mut().find(|k| {
                k.nnode == c.nnode
                    && k.activation == c.activation
                    && k.output_option == c.output_option
                    && k.residual == c.residual
            }) {
                Some(k) => k.points.push(point),
                None => curves.push(BatchCurve {
                    nnode: c.nnode.clone(),
                    activation: c.activation,
                    output_option: c.output_option,
                    residual: c.residual,
                    points: vec![point],
                }),
            }
        }
        for k in &mut curves {
            k.points.sort_by_key(|p| p.0);
        }
        curves
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "rank",
            "batch_size",
            "nnode",
            "activation",
            "output_option",
            "residual",
            "parameter_count",
            "mean_val_metric",
            "mean_test_metric",
            "converged",
            "non_convergent",
        ])?;
        for (rank, &i) in self.ranking.iter().enumerate() {
            let c = &self.cells[i];
            let nnode: Vec<String> = c.nnode.iter().map(usize::to_string).collect();
            w.write_record([
                (rank + 1).to_string(),
                c.batch_size.to_string(),
                nnode.join("-"),
                c.activation.to_string(),
                serde_json::to_value(c.output_option)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                c.residual.to_string(),
                c.parameter_count.to_string(),
                c.score().map(|v| v.to_string()).unwrap_or_default(),
                c.test.headline().map(|v| v.to_string()).unwrap_or_default(),
                c.validation.converged.to_string(),
                c.validation.non_convergent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full-factorial search. Cells are ranked by mean validation R² (accuracy
/// for classification), ties by fewer parameters, then smaller batch size.
pub fn grid_search(
    ds: &Dataset,
    template: &RunConfig,
    grid: &GridSpec,
    n_seeds: usize,
    base_seed: u64,
) -> Result<GridReport> {
    let template = template.fitted_to(ds);
    let or = |axis: &[usize], d: usize| {
        if axis.is_empty() {
            vec![d]
        } else {
            axis.to_vec()
        }
    };
    let batch_sizes = or(&grid.batch_sizes, template.train.batch_size);
    let node_lists = if grid.node_lists.is_empty() {
        vec![template.network.nnode.clone()]
    } else {
        grid.node_lists.clone()
    };
    let activations = if grid.activations.is_empty() {
        vec![template.network.activation(0)]
    } else {
        grid.activations.clone()
    };
    let outputs = if grid.output_options.is_empty() {
        vec![template.network.output_option]
    } else {
        grid.output_options.clone()
    };
    let residuals = if grid.residual.is_empty() {
        vec![residual_arm(&template.network), ResidualMode::Off]
    } else {
        grid.residual.clone()
    };

    let mut jobs = Vec::new();
    for nnode in &node_lists {
        for &act in &activations {
            for &out in &outputs {
                for &res in &residuals {
                    for &b in &batch_sizes {
                        let mut cfg = template.clone();
                        cfg.network.nnode = nnode.clone();
                        if grid.activations.is_empty() && template.network.acts.len() != 1 {
                            cfg.network.acts = template.network.acts.clone();
                        } else {
                            cfg.network.acts = vec![act];
                        }
                        cfg.network.output_option = out;
                        cfg.network.residual = res;
                        cfg.train.batch_size = b;
                        cfg.network.validate()?;
                        cfg.resolved_loss(ds.task)?;
                        cfg.train.validate(&cfg.network)?;
                        jobs.push(Job {
                            arm: GridCell::arm_label(res),
                            shortcuts: res,
                            cfg,
                        });
                    }
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::InvalidArgument("grid has no cells".into()));
    }
    let runs = run_jobs(ds, &jobs, n_seeds, base_seed, template.stratify, false)?;

    let cells: Vec<GridCell> = jobs
        .iter()
        .enumerate()
        .map(|(j, job)| {
            let cell_runs: Vec<ArmRun> = (0..n_seeds)
                .map(|s| runs[s * jobs.len() + j].clone())
                .collect();
            let refs: Vec<&ArmRun> = cell_runs.iter().collect();
            let summary = ArmSummary::of(&job.arm, &refs);
            GridCell {
                batch_size: job.cfg.train.batch_size,
                nnode: job.cfg.network.nnode.clone(),
                activation: job.cfg.network.activation(0),
                output_option: job.cfg.network.output_option,
                residual: job.shortcuts,
                parameter_count: cell_runs[0].parameter_count,
                test: summary.test.clone(),
                validation: summary,
                runs: cell_runs,
            }
        })
        .collect();

    let mut ranking: Vec<usize> = (0..cells.len()).collect();
    ranking.sort_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        let score = |c: &GridCell| c.score().unwrap_or(f64::NEG_INFINITY);
        score(cb)
            .total_cmp(&score(ca))
            .then(ca.parameter_count.cmp(&cb.parameter_count))
            .then(ca.batch_size.cmp(&cb.batch_size))
    });
    Ok(GridReport {
        grid: grid.clone(),
        n_seeds,
        seeds: (0..n_seeds).map(|s| seed_for(base_seed, s)).collect(),
        template,
        cells,
        ranking,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    /// Number of active shortcuts, outermost first.
    pub shortcuts: usize,
    pub summary: ArmSummary,
    pub runs: Vec<ArmRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
    pub available_shortcuts: usize,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "shortcuts",
            "mean_test_r2",
            "mean_test_rmse",
            "mean_test_accuracy",
            "converged",
            "non_convergent",
        ])?;
        let f = |s: Option<Spread>| s.map(|s| s.mean.to_string()).unwrap_or_default();
        for row in &self.rows {
            let t = &row.summary.test;
            w.write_record([
                row.shortcuts.to_string(),
                f(t.r2),
                f(t.rmse),
                f(t.accuracy),
                row.summary.converged.to_string(),
                row.summary.non_convergent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean test R² (or accuracy) per shortcut count.
    pub fn headline(&self) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| r.summary.test.headline())
            .collect()
    }
}

/// Trains variants with 0, 1, …, all outermost shortcuts active.
pub fn residual_sensitivity(
    ds: &Dataset,
    cfg: &RunConfig,
    n_seeds: usize,
    base_seed: u64,
) -> Result<SensitivityReport> {
    let cfg = cfg.fitted_to(ds);
    cfg.network.validate()?;
    cfg.resolved_loss(ds.task)?;
    let available = cfg.network.available_shortcuts();
    if available < 2 {
        return Err(Error::InvalidArgument(format!(
            "sensitivity needs at least 2 shortcut pairs, the spec has {available}"
        )));
    }
    let jobs: Vec<Job> = (0..=available)
        .map(|n| Job {
            arm: format!("shortcuts_{n}"),
            shortcuts: ResidualMode::Outermost(n),
            cfg: cfg.clone(),
        })
        .collect();
    let runs = run_jobs(ds, &jobs, n_seeds, base_seed, cfg.stratify, false)?;
    let rows = jobs
        .iter()
        .enumerate()
        .map(|(j, job)| {
            let row_runs: Vec<ArmRun> = (0..n_seeds)
                .map(|s| runs[s * jobs.len() + j].clone())
                .collect();
            let refs: Vec<&ArmRun> = row_runs.iter().collect();
            SensitivityRow {
                shortcuts: j,
                summary: ArmSummary::of(&job.arm, &refs),
                runs: row_runs,
            }
        })
        .collect();
    Ok(SensitivityReport {
        n_seeds,
        seeds: (0..n_seeds).map(|s| seed_for(base_seed, s)).collect(),
        config: cfg,
        available_shortcuts: available,
        rows,
    })
}
