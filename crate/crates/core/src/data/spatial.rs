use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Task};
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

pub const SPATIAL_FEATURE_NAMES: [&str; 5] = ["x", "y", "x2", "y2", "xy"];

/// Coordinate covariates `(x, y, x², y², xy)`.
pub fn spatial_features(x: f64, y: f64) -> [f64; 5] {
    [x, y, x * x, y * y, x * y]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialFieldConfig {
    /// Sites are drawn uniformly from `[0, extent]²`.
    pub extent: f64,
    pub n_bumps: usize,
    /// Amplitude range of each bump.
    pub amplitude: (f64, f64),
    /// Coefficients of the non-spatial covariates (each drawn N(0, 1)).
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
}

impl Default for SpatialFieldConfig {
    fn default() -> Self {
        SpatialFieldConfig {
            extent: 10.0,
            n_bumps: 4,
            amplitude: (2.0, 4.0),
            coefficients: vec![1.0, -0.5, 0.8],
            noise_sd: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: (f64, f64),
    pub amplitude: f64,
    /// Gaussian length scale.
    pub width: f64,
}

/// The noise-free field: a sum of Gaussian bumps plus a linear covariate
/// effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFieldModel {
    pub bumps: Vec<Bump>,
    pub coefficients: Vec<f64>,
}

impl SpatialFieldModel {
    pub fn surface(&self, x: f64, y: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let d2 = (x - b.center.0).powi(2) + (y - b.center.1).powi(2);
                b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp()
            })
            .sum()
    }

    pub fn evaluate(&self, x: f64, y: f64, covariates: &[f64]) -> f64 {
        self.surface(x, y)
            + self
                .coefficients
                .iter()
                .zip(covariates)
                .map(|(c, z)| c * z)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SpatialField {
    /// Covariates only.
    pub plain: Dataset,
    /// Covariates followed by the five spatial features.
    pub spatial: Dataset,
    pub sites: Vec<(f64, f64)>,
    pub model: SpatialFieldModel,
}

pub fn generate_spatial_field(
    n: usize,
    seed: u64,
    correlation_length: f64,
) -> Result<SpatialField> {
    generate_spatial_field_with(n, seed, correlation_length, &SpatialFieldConfig::default())
}

pub fn generate_spatial_field_with(
    n: usize,
    seed: u64,
    correlation_length: f64,
    cfg: &SpatialFieldConfig,
) -> Result<SpatialField> {
    if n < 50 {
        return Err(Error::InvalidArgument(format!(
            "spatial field needs n >= 50, got {n}"
        )));
    }
    if !(correlation_length > 0.0 && correlation_length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "correlation length must be positive, got {correlation_length}"
        )));
    }
    let master = Rng::new(seed);
    let mut field_rng = master.derive(0);
    let bumps = (0..cfg.n_bumps)
        .map(|_| Bump {
            center: (
                field_rng.uniform(0.0, cfg.extent),
                field_rng.uniform(0.0, cfg.extent),
            ),
            amplitude: field_rng.uniform(cfg.amplitude.0, cfg.amplitude.1),
            width: correlation_length,
        })
        .collect();
    let model = SpatialFieldModel {
        bumps,
        coefficients: cfg.coefficients.clone(),
    };

    let mut rng = master.derive(1);
    let m = cfg.coefficients.len();
    let mut sites = Vec::with_capacity(n);
    let mut plain = Vec::with_capacity(n * m);
    let mut spatial = Vec::with_capacity(n * (m + 5));
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = (rng.uniform(0.0, cfg.extent), rng.uniform(0.0, cfg.extent));
        let z: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        let noise = rng.standard_normal() * cfg.noise_sd;
        targets.push(model.evaluate(x, y, &z) + noise);
        plain.extend_from_slice(&z);
        spatial.extend_from_slice(&z);
        spatial.extend_from_slice(&spatial_features(x, y));
        sites.push((x, y));
    }
    let covariate_names: Vec<String> = (1..=m).map(|i| format!("z{i}")).collect();
    let spatial_names: Vec<String> = covariate_names
        .iter()
        .cloned()
        .chain(SPATIAL_FEATURE_NAMES.iter().map(|s| s.to_string()))
        .collect();
    let target = Matrix::column(targets);
    Ok(SpatialField {
        plain: Dataset::new(
            Matrix::new(n, m, plain)?,
            target.clone(),
            covariate_names,
            vec!["value".into()],
            Task::Regression,
        )?,
        spatial: Dataset::new(
            Matrix::new(n, m + 5, spatial)?,
            target,
            spatial_names,
            vec!["value".into()],
            Task::Regression,
        )?,
        sites,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_feature_values() {
        assert_eq!(spatial_features(0.0, 0.0), [0.0; 5]);
        assert_eq!(spatial_features(2.0, 3.0), [2.0, 3.0, 4.0, 9.0, 6.0]);
        assert_eq!(spatial_features(-1.0, 1.0), [-1.0, 1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn bump_center_closed_form() {
        let cfg = SpatialFieldConfig {
            n_bumps: 1,
            noise_sd: 0.0,
            ..SpatialFieldConfig::default()
        };
        let field = generate_spatial_field_with(60, 4, 2.0, &cfg).unwrap();
        let bump = field.model.bumps[0];
        let z = [0.5, -1.0, 2.0];
        let expected = bump.amplitude + 0.5 + 0.5 + 1.6;
        let got = field.model.evaluate(bump.center.0, bump.center.1, &z);
        assert!((got - expected).abs() < 1e-12);
        for (r, &(x, y)) in field.sites.iter().enumerate() {
            let z = field.plain.features.row(r);
            assert_eq!(field.plain.targets.get(r, 0), field.model.evaluate(x, y, z));
        }
    }

    #[test]
    fn variants_and_determinism() {
        let a = generate_spatial_field(100, 9, 2.0).unwrap();
        assert_eq!(a.spatial.n_features(), a.plain.n_features() + 5);
        assert_eq!(a.spatial.targets, a.plain.targets);
        let b = generate_spatial_field(100, 9, 2.0).unwrap();
        assert_eq!(a.spatial, b.spatial);
        assert_eq!(a.model, b.model);
        assert!(generate_spatial_field(49, 9, 2.0).is_err());
    }
}
