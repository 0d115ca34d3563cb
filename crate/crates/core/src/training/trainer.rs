use std::io::Write;

use serde::{Deserialize, Serialize};

use super::loss::{data_loss, loss, LossKind, Regularizer};
use super::optimizer::{Optimizer, OptimizerKind};
use crate::evaluation::{argmax, r2_columns};
use crate::layers::Mode;
use crate::network::{Network, NetworkSpec, OutputOption};
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Epochs without a new best validation loss before stopping; 0 disables
    /// early stopping (best weights are still restored).
    pub early_stop_patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            early_stop_patience: 50,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let needs_two = spec.use_batchnorm
            || spec.residual_option == crate::layers::ResidualOption::ActivationBatchNorm;
        if self.batch_size == 0 || (needs_two && self.batch_size < 2) {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} too small{}",
                self.batch_size,
                if needs_two {
                    " for batch normalization (need >= 2)"
                } else {
                    ""
                }
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "max_epochs must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Checks that the loss matches the head layout of `spec`.
pub fn check_loss_compatible(kind: LossKind, spec: &NetworkSpec) -> Result<()> {
    let ok = match kind {
        LossKind::MseOpt1 | LossKind::CrossEntropy => spec.output_option == OutputOption::Opt1,
        LossKind::MsePlusReconstructionOpt2 { .. } => spec.output_option == OutputOption::Opt2,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "loss {kind:?} does not fit output option {:?}",
            spec.output_option
        )))
    }
}

/// Borrowed train and validation partitions (already standardized).
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train_x: &'a Matrix,
    pub train_y: &'a Matrix,
    pub val_x: &'a Matrix,
    pub val_y: &'a Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// R² for regression losses, accuracy for cross-entropy.
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Data loss over the training partition before the first update.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the restored best-validation state.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_loss", "val_metric"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.val_metric.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: TrainHistory,
}

/// Mini-batch index lists for one epoch. A trailing batch of one row is
/// folded into the previous batch so batch normalization always sees two.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(last);
        }
    }
    out
}

/// Validation loss and metric in infer mode.
pub fn evaluate_loss(
    net: &Network,
    kind: LossKind,
    x: &Matrix,
    y: &Matrix,
) -> Result<(f64, Option<f64>)> {
    let p = net.predict(x)?;
    let (value, _) = data_loss(kind, &p, y, Some(x))?;
    let metric = match kind {
        LossKind::CrossEntropy => {
            let correct = (0..y.rows())
                .filter(|&r| argmax(p.outputs.row(r)) as f64 == y.get(r, 0))
                .count();
            Some(correct as f64 / y.rows() as f64)
        }
        _ => r2_columns(y, &p.outputs).ok(),
    };
    Ok((value, metric))
}

/// Runs the epoch loop and returns the network restored to its best
/// validation-loss state.
pub fn train(
    mut net: Network,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    kind: LossKind,
    reg: &Regularizer,
) -> Result<TrainOutcome> {
    cfg.validate(net.spec())?;
    check_loss_compatible(kind, net.spec())?;
    let n = data.train_x.rows();
    if n < 2 || data.train_y.rows() != n {
        return Err(Error::InvalidArgument(format!(
            "training partition needs >= 2 aligned rows, got {n} features and {} targets",
            data.train_y.rows()
        )));
    }
    if data.val_x.rows() == 0 || data.val_x.rows() != data.val_y.rows() {
        return Err(Error::InvalidArgument(
            "validation partition is empty or misaligned".into(),
        ));
    }

    let master = Rng::new(cfg.seed);
    let mut shuffle_rng = master.derive(2);
    net.reseed_dropout(master.derive(3).next_u64());
    let mut optimizer = Optimizer::new(cfg.optimizer);

    let mut history = TrainHistory {
        initial_train_loss: evaluate_loss(&net, kind, data.train_x, data.train_y)?.0,
        ..TrainHistory::default()
    };
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.max_epochs {
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut weighted = 0.0;
        for (b, idx) in batches(&order, cfg.batch_size).iter().enumerate() {
            let x = data.train_x.select_rows(idx);
            let y = data.train_y.select_rows(idx);
            let p = net.forward(&x, Mode::Train)?;
            let l = loss(kind, &p, &y, Some(&x), reg, &net)?;
            if !l.value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    loss: l.value,
                });
            }
            let mut grads = net.backward(&l.head_gradient)?;
            reg.add_gradient(&net, &mut grads);
            optimizer.step(net.parameters_mut(), &grads, cfg.learning_rate)?;
            weighted += l.value * idx.len() as f64;
        }
        net.clear_caches();

        let (val_loss, val_metric) = evaluate_loss(&net, kind, data.val_x, data.val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteValidation {
                epoch,
                loss: val_loss,
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / n as f64,
            val_loss,
            val_metric,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let network = best.map(|(_, n)| n).unwrap_or(net);
    Ok(TrainOutcome { network, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_single_row_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order, 3);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3]);
        let b = batches(&order[..1], 4);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            initial_train_loss: 1.0,
            epochs: vec![
                EpochRecord {
                    epoch: 0,
                    train_loss: 0.5,
                    val_loss: 0.25,
                    val_metric: Some(0.75),
                },
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.4,
                    val_loss: 0.3,
                    val_metric: None,
                },
            ],
            best_epoch: 0,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss,val_metric\n0,0.5,0.25,0.75\n1,0.4,0.3,\n"
        );
    }

    #[test]
    fn tiny_batches_rejected_with_batchnorm() {
        let spec = NetworkSpec::new(2, vec![2], 1);
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(&spec).is_err());
    }
}
