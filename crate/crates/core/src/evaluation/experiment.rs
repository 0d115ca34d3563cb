use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, regression_metrics, softmax, Metrics};
use crate::data::{split, Dataset, SplitIndices, Task};
use crate::network::{
    build_rdrn, truncate_residuals, ModelDocument, Network, NetworkSpec, OutputOption, ResidualMode,
};
use crate::numeric::{Matrix, StandardizeStats};
use crate::training::{train, LossKind, Regularizer, TrainConfig, TrainData, TrainHistory};
use crate::{Error, Result};

/// Everything needed to train and evaluate one network on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Resolved from the task and output option when absent.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub regularizer: Regularizer,
    /// Stratify splits by [`Dataset::strata`].
    #[serde(default)]
    pub stratify: bool,
}

impl RunConfig {
    pub fn new(network: NetworkSpec) -> Self {
        RunConfig {
            network,
            train: TrainConfig::default(),
            loss: None,
            regularizer: Regularizer::NONE,
            stratify: false,
        }
    }

    /// Copy with `nfea` and `k` taken from the dataset.
    pub fn fitted_to(&self, ds: &Dataset) -> RunConfig {
        let mut cfg = self.clone();
        cfg.network.nfea = ds.n_features();
        cfg.network.k = ds.head_outputs();
        cfg
    }

    pub fn resolved_loss(&self, task: Task) -> Result<LossKind> {
        resolve_loss(self.loss, task, self.network.output_option)
    }
}

/// Loss implied by the task and head layout. An explicit MSE loss is
/// adapted to the head; cross-entropy with a reconstruction head is an error.
pub fn resolve_loss(
    explicit: Option<LossKind>,
    task: Task,
    output: OutputOption,
) -> Result<LossKind> {
    let weight = match explicit {
        Some(LossKind::MsePlusReconstructionOpt2 { weight }) => weight,
        _ => 1.0,
    };
    match (task, output, explicit) {
        (Task::Classification { .. }, OutputOption::Opt1, None | Some(LossKind::CrossEntropy)) => {
            Ok(LossKind::CrossEntropy)
        }
        (Task::Classification { .. }, _, _) => Err(Error::InvalidArgument(
            "classification uses cross-entropy with output option 1 only".into(),
        )),
        (Task::Regression, _, Some(LossKind::CrossEntropy)) => Err(Error::InvalidArgument(
            "cross-entropy needs a classification dataset".into(),
        )),
        (Task::Regression, OutputOption::Opt1, _) => Ok(LossKind::MseOpt1),
        (Task::Regression, OutputOption::Opt2, _) => {
            Ok(LossKind::MsePlusReconstructionOpt2 { weight })
        }
    }
}

/// A network together with the scaling it was trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: ModelDocument,
    pub feature_stats: StandardizeStats,
    /// Present for regression: predictions are mapped back to target units.
    pub target_stats: Option<StandardizeStats>,
    pub task: Task,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub target_names: Vec<String>,
}

impl TrainedModel {
    /// Wraps a trained network with the scaling and column names of `data`.
    pub fn new(network: &Network, data: &PreparedData) -> Self {
        TrainedModel {
            model: ModelDocument::new(network),
            feature_stats: data.feature_stats.clone(),
            target_stats: data.target_stats.clone(),
            task: data.task,
            feature_names: data.feature_names.clone(),
            target_names: data.target_names.clone(),
        }
    }

    pub fn network(&self) -> &Network {
        &self.model.network
    }

    /// Infer-mode predictions for raw features: target units for regression,
    /// class probabilities for classification.
    pub fn predict(&self, raw_x: &Matrix) -> Result<Matrix> {
        let x = self.feature_stats.apply(raw_x)?;
        let out = self.model.network.predict(&x)?.outputs;
        match (&self.task, &self.target_stats) {
            (Task::Classification { .. }, _) => Ok(softmax(&out)),
            (Task::Regression, Some(stats)) => stats.invert(&out),
            (Task::Regression, None) => Ok(out),
        }
    }

    /// Metrics of [`TrainedModel::predict`] against raw targets.
    pub fn evaluate(&self, raw_x: &Matrix, raw_y: &Matrix) -> Result<Metrics> {
        let p = self.predict(raw_x)?;
        score(self.task, raw_y, &p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut m: TrainedModel = serde_json::from_str(json)?;
        let net = m.model.clone().into_network()?;
        m.model = ModelDocument::new(&net);
        if m.feature_stats.width() != net.spec().nfea {
            return Err(Error::InvalidSpec(format!(
                "feature scaling has {} columns, network expects {}",
                m.feature_stats.width(),
                net.spec().nfea
            )));
        }
        if !m.feature_names.is_empty() && m.feature_names.len() != net.spec().nfea {
            return Err(Error::InvalidSpec(format!(
                "{} feature names for {} inputs",
                m.feature_names.len(),
                net.spec().nfea
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn score(task: Task, raw_y: &Matrix, predictions: &Matrix) -> Result<Metrics> {
    match task {
        Task::Regression => regression_metrics(raw_y, predictions),
        Task::Classification { .. } => {
            let labels: Vec<usize> = raw_y.data().iter().map(|&v| v as usize).collect();
            classification_metrics(&labels, predictions)
        }
    }
}

/// One split of a dataset, standardized with statistics fitted on the
/// training rows.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: SplitIndices,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub feature_stats: StandardizeStats,
    pub target_stats: Option<StandardizeStats>,
    pub train_x: Matrix,
    pub train_y: Matrix,
    pub val_x: Matrix,
    pub val_y: Matrix,
    pub raw_val_x: Matrix,
    pub raw_val_y: Matrix,
    pub raw_test_x: Matrix,
    pub raw_test_y: Matrix,
}

impl PreparedData {
    pub fn new(ds: &Dataset, split: SplitIndices) -> Result<Self> {
        let pick = |rows: &[usize]| (ds.features.select_rows(rows), ds.targets.select_rows(rows));
        let (raw_train_x, raw_train_y) = pick(&split.train);
        let (raw_val_x, raw_val_y) = pick(&split.validation);
        let (raw_test_x, raw_test_y) = pick(&split.test);
        let feature_stats = StandardizeStats::fit(&raw_train_x)?;
        let target_stats = match ds.task {
            Task::Regression => Some(StandardizeStats::fit(&raw_train_y)?),
            Task::Classification { .. } => None,
        };
        let scale_y = |y: &Matrix| match &target_stats {
            Some(s) => s.apply(y),
            None => Ok(y.clone()),
        };
        Ok(PreparedData {
            train_x: feature_stats.apply(&raw_train_x)?,
            train_y: scale_y(&raw_train_y)?,
            val_x: feature_stats.apply(&raw_val_x)?,
            val_y: scale_y(&raw_val_y)?,
            split,
            task: ds.task,
            feature_names: ds.feature_names.clone(),
            target_names: ds.target_names.clone(),
            feature_stats,
            target_stats,
            raw_val_x,
            raw_val_y,
            raw_test_x,
            raw_test_y,
        })
    }

    pub fn for_seed(ds: &Dataset, seed: u64, stratify: bool) -> Result<Self> {
        Self::new(ds, split(ds, seed, stratify)?)
    }

    pub fn train_data(&self) -> TrainData<'_> {
        TrainData {
            train_x: &self.train_x,
            train_y: &self.train_y,
            val_x: &self.val_x,
            val_y: &self.val_y,
        }
    }
}

/// Result of training one network on one split.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub loss: LossKind,
    pub validation: Metrics,
    pub test: Metrics,
    /// Test-set predictions in target units (probabilities for classification).
    pub test_predictions: Matrix,
}

/// Builds the network for `cfg` with `shortcuts` active, trains it on `data`
/// and scores it on validation and test rows. The network seed and the
/// training seed are both `seed`.
pub fn run_prepared(
    data: &PreparedData,
    cfg: &RunConfig,
    shortcuts: ResidualMode,
    seed: u64,
) -> Result<RunOutcome> {
    let loss = cfg.resolved_loss(data.task)?;
    let full = build_rdrn(&cfg.network, seed)?;
    let active = shortcuts.active_count(full.available_shortcuts());
    let net = truncate_residuals(&full, active)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let outcome = train(net, data.train_data(), &train_cfg, loss, &cfg.regularizer)?;
    let model = TrainedModel::new(&outcome.network, data);
    let validation = model.evaluate(&data.raw_val_x, &data.raw_val_y)?;
    let test_predictions = model.predict(&data.raw_test_x)?;
    let test = score(data.task, &data.raw_test_y, &test_predictions)?;
    Ok(RunOutcome {
        model,
        history: outcome.history,
        loss,
        validation,
        test,
        test_predictions,
    })
}

/// Splits `ds` with `seed`, then runs [`run_prepared`] with the spec's own
/// residual setting.
pub fn run_experiment(
    ds: &Dataset,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(PreparedData, RunOutcome)> {
    let cfg = cfg.fitted_to(ds);
    let data = PreparedData::for_seed(ds, seed, cfg.stratify)?;
    let outcome = run_prepared(&data, &cfg, cfg.network.residual, seed)?;
    Ok((data, outcome))
}
