use std::fs;
use std::path::{Path, PathBuf};

use rdrn::data::{
    generate_simulated, generate_spatial_field, load_csv, CsvOptions, Dataset,
    DEFAULT_SIMULATED_ROWS,
};
use rdrn::evaluation::{GridSpec, RunConfig};
use rdrn::network::NetworkSpec;
use rdrn::training::{LossKind, Regularizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where the rows of an experiment come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Simulate {
        #[serde(default = "default_rows")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        options: CsvOptions,
    },
    SpatialField {
        #[serde(default = "default_rows")]
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_correlation_length")]
        correlation_length: f64,
        /// Append the coordinate features to the covariates.
        #[serde(default = "default_true")]
        spatial_features: bool,
    },
}

fn default_rows() -> usize {
    DEFAULT_SIMULATED_ROWS
}

fn default_correlation_length() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Simulate {
            n: DEFAULT_SIMULATED_ROWS,
            seed: 0,
        }
    }
}

impl DatasetSource {
    /// Copy with a relative CSV path joined onto `base` and made absolute
    /// where possible.
    pub fn rebased(&self, base: &Path) -> DatasetSource {
        match self {
            DatasetSource::Csv { path, options } => {
                let joined = base.join(path);
                DatasetSource::Csv {
                    path: fs::canonicalize(&joined).unwrap_or(joined),
                    options: options.clone(),
                }
            }
            other => other.clone(),
        }
    }

    pub fn load(&self) -> rdrn::Result<Dataset> {
        match self {
            DatasetSource::Simulate { n, seed } => generate_simulated(*n, *seed),
            DatasetSource::Csv { path, options } => load_csv(path, options),
            DatasetSource::SpatialField {
                n,
                seed,
                correlation_length,
                spatial_features,
            } => {
                let field = generate_spatial_field(*n, *seed, *correlation_length)?;
                Ok(if *spatial_features {
                    field.spatial
                } else {
                    field.plain
                })
            }
        }
    }
}

/// A complete, re-runnable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default)]
    pub stratify: bool,
    /// Split, initialization and training seed (copied into `train.seed`);
    /// studies use `seed + s`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_n_seeds() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            network: self.network.clone(),
            train: self.train.clone(),
            loss: self.loss,
            regularizer: self.regularizer,
            stratify: self.stratify,
        }
    }

    /// Copy with every value a run depends on filled in from the dataset.
    pub fn resolved(&self, ds: &Dataset) -> Result<Self, CliError> {
        let run = self.run_config().fitted_to(ds);
        let loss = run.resolved_loss(ds.task).map_err(CliError::from_core)?;
        run.network.validate().map_err(CliError::from_core)?;
        run.train
            .validate(&run.network)
            .map_err(CliError::from_core)?;
        if self.n_seeds == 0 {
            return Err(CliError::Usage("n_seeds must be at least 1".into()));
        }
        Ok(ExperimentConfig {
            network: run.network,
            train: TrainConfig {
                seed: self.seed,
                ..run.train
            },
            loss: Some(loss),
            ..self.clone()
        })
    }

    /// The config as embedded in result files: everything except where the
    /// files were written.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"network": {"nnode": [32, 16, 8, 4]}}"#).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::default());
        assert_eq!(cfg.n_seeds, 5);
        assert_eq!(cfg.train, TrainConfig::default());
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn csv_source_flattens_options() {
        let src: DatasetSource = serde_json::from_str(
            r#"{"source": "csv", "path": "a.csv", "target_columns": ["y"], "delimiter": "\t"}"#,
        )
        .unwrap();
        match src {
            DatasetSource::Csv { path, options } => {
                assert_eq!(path, PathBuf::from("a.csv"));
                assert_eq!(options.target_columns, vec!["y"]);
                assert_eq!(options.delimiter, '\t');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolution_fills_network_io() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"network": {"nnode": [8, 4]}}"#).unwrap();
        let ds = generate_simulated(50, 0).unwrap();
        let r = cfg.resolved(&ds).unwrap();
        assert_eq!((r.network.nfea, r.network.k), (8, 1));
        assert_eq!(r.loss, Some(LossKind::MseOpt1));
        assert!(r.echo().get("output_dir").is_none());
    }
}
