use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::{Error, Result};

/// Every metric is optional: regression runs fill `r2`/`rmse`/`nrmse`,
/// classification runs fill `accuracy`/`cross_entropy`/`auc`, and undefined
/// values (constant targets, a single class) stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    /// RMSE divided by the observed target range.
    pub nrmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub cross_entropy: Option<f64>,
    pub auc: Option<f64>,
}

impl Metrics {
    /// R² for regression, accuracy for classification.
    pub fn headline(&self) -> Option<f64> {
        self.r2.or(self.accuracy)
    }
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "metric inputs differ in length: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric("r2 needs at least two rows"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 of a constant target"));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of per-column R² over a multi-target matrix.
pub fn r2_columns(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    if y.shape() != y_hat.shape() {
        return Err(Error::shape("r2", y.shape(), y_hat.shape()));
    }
    let mut total = 0.0;
    for c in 0..y.cols() {
        total += r2(&y.column_values(c), &y_hat.column_values(c))?;
    }
    Ok(total / y.cols() as f64)
}

/// `(rmse, nrmse)`; nrmse is absent when the targets are constant.
pub fn rmse_and_nrmse(y: &[f64], y_hat: &[f64]) -> Result<(f64, Option<f64>)> {
    check_lengths(y, y_hat)?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("rmse of an empty set"));
    }
    let mse = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    let rmse = mse.sqrt();
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    Ok((rmse, (range > 0.0).then(|| rmse / range)))
}

/// Regression metrics over all target columns pooled together for RMSE and
/// averaged per column for R².
pub fn regression_metrics(y: &Matrix, y_hat: &Matrix) -> Result<Metrics> {
    if y.shape() != y_hat.shape() {
        return Err(Error::shape("regression metrics", y.shape(), y_hat.shape()));
    }
    let (rmse, nrmse) = rmse_and_nrmse(y.data(), y_hat.data())?;
    Ok(Metrics {
        r2: r2_columns(y, y_hat).ok(),
        rmse: Some(rmse),
        nrmse,
        ..Metrics::default()
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Area under the ROC curve for binary labels. Tied scores contribute half,
/// which is the trapezoid rule over the ROC step function. `None` unless
/// both classes are present.
pub fn auc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
    }
    Some(area / (n_pos as f64 * n_neg as f64))
}

/// Accuracy, mean cross-entropy and AUC (binary: class-1 score; more
/// classes: macro average of one-vs-rest over classes present in `labels`).
pub fn classification_metrics(labels: &[usize], probs: &Matrix) -> Result<Metrics> {
    if labels.len() != probs.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} probability rows",
            labels.len(),
            probs.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric(
            "classification metrics of an empty set",
        ));
    }
    let k = probs.cols();
    for (r, &label) in labels.iter().enumerate() {
        let row = probs.row(r);
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "probability row {r} sums to {total}"
            )));
        }
        if label >= k {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {k} classes"
            )));
        }
    }
    let n = labels.len() as f64;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| argmax(probs.row(*r)) == l)
        .count();
    let cross_entropy = -labels
        .iter()
        .enumerate()
        .map(|(r, &l)| probs.get(r, l).max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n;
    let auc = if k == 2 {
        let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        auc_binary(&positive, &probs.column_values(1))
    } else {
        let per_class: Vec<f64> = (0..k)
            .filter_map(|c| {
                let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                auc_binary(&positive, &probs.column_values(c))
            })
            .collect();
        (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64)
    };
    Ok(Metrics {
        accuracy: Some(correct as f64 / n),
        cross_entropy: Some(cross_entropy),
        auc,
        ..Metrics::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    #[test]
    fn r2_reference_values() {
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(r2(&[4.0, 4.0], &[1.0, 2.0]).is_err());
        assert!(r2(&[4.0], &[4.0]).is_err());
    }

    #[test]
    fn rmse_reference_values() {
        assert_eq!(
            rmse_and_nrmse(&[1.0, 3.0], &[1.0, 3.0]).unwrap(),
            (0.0, Some(0.0))
        );
        assert_eq!(
            rmse_and_nrmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(),
            (1.0, Some(0.5))
        );
        assert_eq!(
            rmse_and_nrmse(&[2.0, 2.0], &[1.0, 1.0]).unwrap(),
            (1.0, None)
        );
    }

    #[test]
    fn perfect_classifier() {
        let probs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let m = classification_metrics(&[0, 1, 1], &probs).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.cross_entropy, Some(0.0));
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn four_point_auc() {
        let pos = [true, true, false, false];
        assert_eq!(auc_binary(&pos, &[0.9, 0.8, 0.3, 0.1]), Some(1.0));
        assert_eq!(auc_binary(&pos, &[0.1, 0.3, 0.8, 0.9]), Some(0.0));
        assert_eq!(auc_binary(&pos, &[0.5; 4]), Some(0.5));
        assert_eq!(auc_binary(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn single_class_auc_absent() {
        let probs = Matrix::from_rows(&[[0.7, 0.3], [0.6, 0.4]]).unwrap();
        let m = classification_metrics(&[0, 0], &probs).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, Some(1.0));
    }

    #[test]
    fn unnormalized_probabilities_rejected() {
        let probs = Matrix::from_rows(&[[0.7, 0.7]]).unwrap();
        assert!(classification_metrics(&[0], &probs).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&Matrix::from_rows(&[[1000.0, 1000.0], [0.0, 2f64.ln()]]).unwrap());
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.get(1, 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    /// Pairwise count: P(score_pos > score_neg) + ½ P(tie).
    fn auc_pairwise(positive: &[bool], scores: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn uniform_scores_are_chance() {
        let mut rng = Rng::new(1);
        let pos: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..400).map(|_| rng.next_f64()).collect();
        let auc = auc_binary(&pos, &scores).unwrap();
        assert!((auc - 0.5).abs() < 0.08, "auc {auc}");
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(
            pairs in prop::collection::vec((any::<bool>(), 0u8..6), 2..40)
        ) {
            let positive: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let scores: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 5.0).collect();
            match auc_binary(&positive, &scores) {
                Some(a) => prop_assert!((a - auc_pairwise(&positive, &scores)).abs() < 1e-12),
                None => prop_assert!(positive.iter().all(|&p| p) || positive.iter().all(|&p| !p)),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            pairs in prop::collection::vec((any::<bool>(), 0.01f64..10.0), 2..40)
        ) {
            let positive: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
            prop_assert_eq!(auc_binary(&positive, &scores), auc_binary(&positive, &cubed));
        }

        #[test]
        fn nrmse_invariant_under_affine_rescale(
            y in prop::collection::vec(-100.0f64..100.0, 3..30),
            noise in prop::collection::vec(-5.0f64..5.0, 30),
            scale in 0.1f64..50.0,
            shift in -100.0f64..100.0,
        ) {
            let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, e)| a + e).collect();
            let (rmse, nrmse) = rmse_and_nrmse(&y, &y_hat).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
            let yhs: Vec<f64> = y_hat.iter().map(|v| v * scale + shift).collect();
            let (rmse2, nrmse2) = rmse_and_nrmse(&ys, &yhs).unwrap();
            prop_assert!((rmse2 - rmse * scale).abs() <= 1e-9 * (1.0 + rmse2));
            if let (Some(a), Some(b)) = (nrmse, nrmse2) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            }
        }

        #[test]
        fn r2_of_mean_predictor_is_zero(y in prop::collection::vec(-10.0f64..10.0, 2..30)) {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let pred = vec![mean; y.len()];
            if let Ok(v) = r2(&y, &pred) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
