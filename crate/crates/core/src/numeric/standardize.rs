//! Per-column z-scoring with population standard deviation.

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::{Error, Result};

/// Smallest standard deviation used when scaling; constant columns are
/// floored to it and reported in [`StandardizeStats::degenerate_columns`].
pub const SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Columns whose standard deviation fell below [`SD_FLOOR`] when fitted.
    #[serde(default)]
    pub degenerate_columns: Vec<usize>,
}

impl StandardizeStats {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "cannot standardize an empty matrix".into(),
            ));
        }
        let mut mean = Vec::with_capacity(x.cols());
        let mut sd = Vec::with_capacity(x.cols());
        let mut degenerate_columns = Vec::new();
        for c in 0..x.cols() {
            // Shifting by the first value keeps constant columns exactly constant.
            let shift = x.get(0, c);
            let offset = (0..n).map(|r| x.get(r, c) - shift).sum::<f64>() / n as f64;
            let m = shift + offset;
            let var = (0..n).map(|r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            if s < SD_FLOOR {
                degenerate_columns.push(c);
                sd.push(SD_FLOOR);
            } else {
                sd.push(s);
            }
            mean.push(m);
        }
        Ok(StandardizeStats {
            mean,
            sd,
            degenerate_columns,
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::shape("standardize", x.shape(), (1, self.width())));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.sd[c];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        let mut out = z.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.sd[c] + self.mean[c];
            }
        }
        Ok(out)
    }
}

/// Standardizes `x` with `stats` if given, otherwise fits new statistics on `x`.
pub fn standardize_fit_apply(
    x: &Matrix,
    stats: Option<&StandardizeStats>,
) -> Result<(Matrix, StandardizeStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizeStats::fit(x)?,
    };
    Ok((stats.apply(x)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn col_mean_var(m: &Matrix, c: usize) -> (f64, f64) {
        let v = m.column_values(c);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn simple_column() {
        let x = Matrix::column(vec![1.0, 2.0, 3.0]);
        let (z, stats) = standardize_fit_apply(&x, None).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.sd[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(col_mean_var(&z, 0).0.abs() < 1e-12);
        assert!(stats.degenerate_columns.is_empty());
    }

    #[test]
    fn constant_column_is_zeroed_with_warning() {
        let x = Matrix::from_rows(&[[5.0, 0.1], [5.0, 0.1], [5.0, 0.1]]).unwrap();
        let (z, stats) = standardize_fit_apply(&x, None).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert_eq!(stats.degenerate_columns, vec![0, 1]);
        assert_eq!(stats.sd, vec![SD_FLOOR, SD_FLOOR]);
    }

    #[test]
    fn supplied_stats_must_match_width() {
        let stats = StandardizeStats::fit(&Matrix::zeros(3, 2)).unwrap();
        assert!(standardize_fit_apply(&Matrix::zeros(3, 3), Some(&stats)).is_err());
    }

    proptest! {
        #[test]
        fn fit_gives_zero_mean_unit_sd(seed in any::<u64>(), rows in 2usize..40, cols in 1usize..5) {
            let mut rng = Rng::new(seed);
            let data = (0..rows * cols).map(|_| rng.uniform(-50.0, 300.0)).collect();
            let x = Matrix::new(rows, cols, data).unwrap();
            let (z, _) = standardize_fit_apply(&x, None).unwrap();
            for c in 0..cols {
                let (m, v) = col_mean_var(&z, c);
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((v.sqrt() - 1.0).abs() < 1e-9);
            }
            // Re-fitting standardized data is idempotent.
            let (z2, s2) = standardize_fit_apply(&z, None).unwrap();
            for c in 0..cols {
                prop_assert!(s2.mean[c].abs() < 1e-9);
                prop_assert!((s2.sd[c] - 1.0).abs() < 1e-9);
                let (m, v) = col_mean_var(&z2, c);
                prop_assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn apply_then_invert_round_trips(seed in any::<u64>(), rows in 2usize..30) {
            let mut rng = Rng::new(seed);
            let data = (0..rows * 3).map(|_| rng.uniform(-1e3, 1e3)).collect();
            let x = Matrix::new(rows, 3, data).unwrap();
            let (z, stats) = standardize_fit_apply(&x, None).unwrap();
            let back = stats.invert(&z).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }
}
