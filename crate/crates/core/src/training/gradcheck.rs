use serde::{Deserialize, Serialize};

use super::loss::{data_loss, LossKind};
use crate::layers::Mode;
use crate::network::Network;
use crate::numeric::{Matrix, Rng};
use crate::Result;

/// Denominator floor of the relative error, so gradients that are zero
/// analytically (for example a dense bias feeding batch normalization) are
/// judged by their absolute difference.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckOptions {
    pub eps: f64,
    /// Parameters checked; every parameter when the network has fewer.
    pub sample: usize,
    pub seed: u64,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        GradientCheckOptions {
            eps: 1e-5,
            sample: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Flat parameter index of the worst entry.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Parameters skipped because a perturbation moved an activation input
    /// across a kink.
    pub skipped: usize,
}

fn set_flat(net: &mut Network, mut idx: usize, value: f64) {
    for p in net.parameters_mut() {
        if idx < p.len() {
            p[idx] = value;
            return;
        }
        idx -= p.len();
    }
}

/// Central-difference check of [`Network::backward`] on the data loss,
/// in train mode with a fixed dropout mask.
pub fn gradient_check(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
    eps: f64,
) -> Result<GradientCheckReport> {
    gradient_check_with(
        net,
        x,
        y,
        kind,
        &GradientCheckOptions {
            eps,
            ..GradientCheckOptions::default()
        },
    )
}

pub fn gradient_check_with(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
    opts: &GradientCheckOptions,
) -> Result<GradientCheckReport> {
    let mut net = net.clone();
    let mask_seed = Rng::new(opts.seed).derive(7).next_u64();
    let objective = |net: &mut Network| -> Result<(f64, Vec<bool>)> {
        net.reseed_dropout(mask_seed);
        let p = net.forward(x, Mode::Train)?;
        let (value, _) = data_loss(kind, &p, y, Some(x))?;
        Ok((value, net.kink_signature()))
    };

    net.reseed_dropout(mask_seed);
    let p = net.forward(x, Mode::Train)?;
    let (_, head_gradient) = data_loss(kind, &p, y, Some(x))?;
    let signature = net.kink_signature();
    let analytic = net.backward(&head_gradient)?.flat();
    let base = net.flat_parameters();

    let n = base.len();
    let indices: Vec<usize> = if n <= opts.sample {
        (0..n).collect()
    } else {
        let mut idx = Rng::new(opts.seed).sample_indices(n, opts.sample);
        idx.sort_unstable();
        idx
    };

    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped: 0,
    };
    for i in indices {
        set_flat(&mut net, i, base[i] + opts.eps);
        let (up, sig_up) = objective(&mut net)?;
        set_flat(&mut net, i, base[i] - opts.eps);
        let (down, sig_down) = objective(&mut net)?;
        set_flat(&mut net, i, base[i]);
        if sig_up != signature || sig_down != signature {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * opts.eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        report.checked += 1;
        if report.worst_index.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
