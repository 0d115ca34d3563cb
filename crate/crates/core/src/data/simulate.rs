use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Task};
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

pub const DEFAULT_SIMULATED_ROWS: usize = 1000;

/// Uniform ranges of `x1..x8` and the noise level of the simulated target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub ranges: [(f64, f64); 8],
    /// Standard deviation of the additive Gaussian noise; 0 disables it.
    pub noise_sd: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            ranges: [
                (0.0, 100.0),
                (0.0, 10.0),
                (0.0, 10.0),
                (0.0, 100.0),
                (100.0, 1000.0),
                (0.0, 100.0),
                (0.0, 30.0),
                (0.0, 100.0),
            ],
            noise_sd: 100.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "x{} range [{lo}, {hi}) is empty",
                    i + 1
                )));
            }
        }
        let (lo, hi) = self.ranges[4];
        if lo <= 0.0 && hi >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "x5 range [{lo}, {hi}) must exclude 0"
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sd {} invalid",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// Noise-free simulated response
/// `x1 + x2·x3² + x4 + (1/(x5/500))^0.3 − x6 + x7² + x8`.
pub fn simulated_response(x: &[f64; 8]) -> f64 {
    x[0] + x[1] * x[2] * x[2] + x[3] + (1.0 / (x[4] / 500.0)).powf(0.3) - x[5] + x[6] * x[6] + x[7]
}

pub fn generate_simulated(n: usize, seed: u64) -> Result<Dataset> {
    generate_simulated_with(n, seed, &SimulationConfig::default())
}

pub fn generate_simulated_with(n: usize, seed: u64, cfg: &SimulationConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "simulated dataset needs n >= 1".into(),
        ));
    }
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut features = Vec::with_capacity(n * 8);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = [0.0; 8];
        for (v, &(lo, hi)) in x.iter_mut().zip(&cfg.ranges) {
            *v = rng.uniform(lo, hi);
        }
        let noise = rng.normal(0.0, 1.0) * cfg.noise_sd;
        features.extend_from_slice(&x);
        targets.push(simulated_response(&x) + noise);
    }
    Dataset::new(
        Matrix::new(n, 8, features)?,
        Matrix::column(targets),
        (1..=8).map(|i| format!("x{i}")).collect(),
        vec!["y".into()],
        Task::Regression,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_response_by_hand() {
        let cfg = SimulationConfig::default();
        let mid: Vec<f64> = cfg.ranges.iter().map(|(a, b)| (a + b) / 2.0).collect();
        let x: [f64; 8] = mid.try_into().unwrap();
        // 50 + 5·25 + 50 + (500/550)^0.3 − 50 + 225 + 50
        let expected = 450.0 + (500.0f64 / 550.0).powf(0.3);
        assert!((simulated_response(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_free_rows_follow_formula() {
        let cfg = SimulationConfig {
            noise_sd: 0.0,
            ..SimulationConfig::default()
        };
        let ds = generate_simulated_with(200, 3, &cfg).unwrap();
        for r in 0..ds.len() {
            let x: [f64; 8] = ds.features.row(r).try_into().unwrap();
            assert_eq!(ds.targets.get(r, 0), simulated_response(&x));
            for (v, (lo, hi)) in x.iter().zip(cfg.ranges) {
                assert!(*v >= lo && *v < hi);
            }
        }
    }

    #[test]
    fn shape_and_determinism() {
        let a = generate_simulated(DEFAULT_SIMULATED_ROWS, 7).unwrap();
        assert_eq!(a.features.shape(), (1000, 8));
        assert_eq!(a.targets.shape(), (1000, 1));
        assert_eq!(a, generate_simulated(1000, 7).unwrap());
        assert_ne!(a, generate_simulated(1000, 8).unwrap());
        assert!(generate_simulated(0, 7).is_err());
    }

    #[test]
    fn noise_has_requested_spread() {
        let clean = SimulationConfig {
            noise_sd: 0.0,
            ..SimulationConfig::default()
        };
        let a = generate_simulated_with(4000, 1, &clean).unwrap();
        let b = generate_simulated(4000, 1).unwrap();
        let diffs: Vec<f64> = a
            .targets
            .data()
            .iter()
            .zip(b.targets.data())
            .map(|(x, y)| y - x)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd =
            (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((sd - 100.0).abs() < 5.0, "sd {sd}");
    }

    #[test]
    fn x5_range_must_exclude_zero() {
        let mut cfg = SimulationConfig::default();
        cfg.ranges[4] = (-1.0, 1.0);
        assert!(generate_simulated_with(10, 0, &cfg).is_err());
    }
}
