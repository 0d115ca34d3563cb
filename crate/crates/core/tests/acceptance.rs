//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! the process exits non-zero when any criterion fails.
//!
//! The Airfoil criterion reads the UCI `airfoil_self_noise.dat` file from
//! `$AIRFOIL_CSV`, falling back to `data/airfoil_self_noise.dat` at the
//! workspace root.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rdrn::data::{
    generate_simulated, generate_spatial_field, load_csv, CsvOptions, Dataset,
    DEFAULT_SIMULATED_ROWS,
};
use rdrn::evaluation::{
    compare, grid_search, residual_sensitivity, run_experiment, seed_for, GridSpec, RunConfig,
    TrainedModel,
};
use rdrn::layers::{ActivationKind, Mode, ResidualOption};
use rdrn::network::{
    build_rdrn, build_regular, truncate_residuals, DropoutPlacement, NetworkSpec, OutputOption,
    ResidualMode,
};
use rdrn::training::{gradient_check, LossKind};
use rdrn::{Matrix, Rng};

const SEEDS: usize = 5;
const DATA_SEED: u64 = 0;

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random spec with 1 to 4 strictly decreasing encode widths.
fn random_spec(rng: &mut Rng) -> NetworkSpec {
    let depth = 1 + rng.below(4);
    let mut width = 3 + depth + rng.below(8);
    let mut nnode = Vec::new();
    for _ in 0..depth {
        nnode.push(width);
        width -= 1 + rng.below((width - 1).clamp(1, 3));
        width = width.max(1);
    }
    let nfea = 2 + rng.below(6);
    let k = 1 + rng.below(3);
    let mut spec = NetworkSpec::new(nfea, nnode, k);
    spec.residual = match rng.below(3) {
        0 => ResidualMode::Full,
        1 => ResidualMode::Off,
        _ => ResidualMode::Outermost(rng.below(depth + 1)),
    };
    spec
}

fn simulated() -> Dataset {
    generate_simulated(DEFAULT_SIMULATED_ROWS, DATA_SEED).unwrap()
}

fn table2_config() -> RunConfig {
    RunConfig::new(NetworkSpec::new(8, vec![32, 16, 8, 4], 1))
}

fn gradient_correctness() -> Outcome {
    let mut rng = Rng::new(2024);
    let instances = 24;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..instances {
        let mut spec = random_spec(&mut rng);
        spec.acts = vec![if i % 2 == 0 {
            ActivationKind::Elu { alpha: 1.0 }
        } else {
            ActivationKind::Tanh
        }];
        spec.use_batchnorm = (i / 2) % 2 == 0;
        spec.output_option = if (i / 4) % 2 == 0 {
            OutputOption::Opt1
        } else {
            OutputOption::Opt2
        };
        spec.residual_option = [
            ResidualOption::None,
            ResidualOption::Activation,
            ResidualOption::ActivationBatchNorm,
        ][rng.below(3)];
        spec.dropout_placement = if rng.below(2) == 0 {
            DropoutPlacement::CodeLayer
        } else {
            DropoutPlacement::AllHidden
        };
        let kind = match spec.output_option {
            OutputOption::Opt1 => LossKind::MseOpt1,
            OutputOption::Opt2 => LossKind::MsePlusReconstructionOpt2 { weight: 1.0 },
        };
        let net = build_rdrn(&spec, i as u64).unwrap();
        let net = truncate_residuals(&net, spec.residual.active_count(net.available_shortcuts()))
            .unwrap();
        let x = random_matrix(8, spec.nfea, &mut rng);
        let y = random_matrix(8, spec.k, &mut rng);
        match gradient_check(&net, &x, &y, kind, 1e-5) {
            Ok(report) => {
                worst = worst.max(report.max_relative_error);
                checked += report.checked;
            }
            Err(e) => return Outcome::new(false, format!("instance {i}: {e}")),
        }
    }
    Outcome::new(
        worst < 1e-4,
        format!(
            "{instances} instances, {checked} parameters, max relative error {worst:.2e} (< 1e-4)"
        ),
    )
}

fn shortcut_gradient_identity() -> Outcome {
    let mut spec = NetworkSpec::new(8, vec![32, 16, 8, 4], 1);
    spec.residual_option = ResidualOption::None;
    let mut rng = Rng::new(10);
    let x = random_matrix(16, 8, &mut rng);
    let g = random_matrix(16, 1, &mut rng);
    let mut failures = Vec::new();
    let depths = build_rdrn(&spec, 0).unwrap().available_shortcuts();
    for depth in 0..depths {
        let mut net = build_rdrn(&spec, 3).unwrap();
        net.zero_deep_branch(depth).unwrap();
        net.forward(&x, Mode::Train).unwrap();
        net.backward(&g).unwrap();
        let same = net.shortcut_gradients()[depth]
            .as_ref()
            .map(|s| {
                s.encode.data().len() == s.decode_sum.data().len()
                    && s.encode
                        .data()
                        .iter()
                        .zip(s.decode_sum.data())
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            })
            .unwrap_or(false);
        if !same {
            failures.push(depth);
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{depths} shortcut depths checked bit-for-bit, mismatches at {failures:?}"),
    )
}

fn parameter_count_invariance() -> Outcome {
    let mut rng = Rng::new(77);
    let mut bad = Vec::new();
    for i in 0..10 {
        let mut spec = random_spec(&mut rng);
        spec.use_batchnorm = rng.below(2) == 0;
        spec.output_option = if rng.below(2) == 0 {
            OutputOption::Opt1
        } else {
            OutputOption::Opt2
        };
        let full = build_rdrn(&spec, i).unwrap();
        let expected = build_regular(&spec, i).unwrap().count_parameters();
        let mut counts = vec![full.count_parameters()];
        for n in 0..=full.available_shortcuts() {
            counts.push(truncate_residuals(&full, n).unwrap().count_parameters());
        }
        if counts.iter().any(|&c| c != expected) {
            bad.push((spec.nnode.clone(), counts));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("10 random specs, all truncation levels; mismatches {bad:?}"),
    )
}

fn simulated_comparison() -> Outcome {
    let report = compare(&simulated(), &table2_config(), SEEDS, 0).unwrap();
    let res = report.residual.test.r2.map(|s| s.mean).unwrap_or(f64::NAN);
    let reg = report.regular.test.r2.map(|s| s.mean).unwrap_or(f64::NAN);
    Outcome::new(
        res - reg >= 0.05 && res >= 0.75,
        format!(
            "mean test R2 residual {res:.4}, regular {reg:.4}, gap {:.4} (>= 0.05, residual >= 0.75); non-convergent {}/{}",
            res - reg,
            report.residual.non_convergent,
            report.regular.non_convergent
        ),
    )
}

fn airfoil_path() -> PathBuf {
    std::env::var_os("AIRFOIL_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/airfoil_self_noise.dat")
        })
}

fn airfoil() -> Outcome {
    let path = airfoil_path();
    if !path.is_file() {
        return Outcome::new(
            false,
            format!(
                "data file {} not found; set AIRFOIL_CSV to the UCI airfoil_self_noise.dat",
                path.display()
            ),
        );
    }
    let opts = CsvOptions {
        target_columns: vec!["sound_pressure".into()],
        delimiter: '\t',
        column_names: Some(
            [
                "frequency",
                "angle",
                "chord",
                "velocity",
                "thickness",
                "sound_pressure",
            ]
            .map(String::from)
            .to_vec(),
        ),
        ..CsvOptions::default()
    };
    let ds = match load_csv(&path, &opts) {
        Ok(ds) => ds,
        Err(e) => return Outcome::new(false, format!("cannot load {}: {e}", path.display())),
    };
    let mut cfg = RunConfig::new(NetworkSpec::new(5, vec![128, 96, 64, 48], 1));
    cfg.train.batch_size = 128;
    cfg.train.max_epochs = 500;
    let (mut r2, mut rmse) = (0.0, 0.0);
    for s in 0..SEEDS {
        match run_experiment(&ds, &cfg, seed_for(0, s)) {
            Ok((_, out)) => {
                r2 += out.test.r2.unwrap_or(f64::NAN) / SEEDS as f64;
                rmse += out.test.rmse.unwrap_or(f64::NAN) / SEEDS as f64;
            }
            Err(e) => return Outcome::new(false, format!("seed {s}: {e}")),
        }
    }
    Outcome::new(
        r2 >= 0.85 && rmse <= 2.5,
        format!(
            "residual mean test R2 {r2:.4} (>= 0.85), RMSE {rmse:.3} (<= 2.5), {} rows",
            ds.len()
        ),
    )
}

fn residual_count_trend() -> Outcome {
    let report = residual_sensitivity(&simulated(), &table2_config(), SEEDS, 0).unwrap();
    let r2: Vec<f64> = report
        .headline()
        .into_iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect();
    let monotone = r2.windows(2).all(|w| w[1] >= w[0] - 0.02);
    let gain = r2[r2.len() - 1] - r2[0];
    let shown: Vec<String> = r2.iter().map(|v| format!("{v:.4}")).collect();
    Outcome::new(
        monotone && gain >= 0.04,
        format!(
            "mean test R2 by shortcut count [{}], non-decreasing within 0.02: {monotone}, full - zero {gain:.4} (>= 0.04)",
            shown.join(", ")
        ),
    )
}

fn batch_curve_shape() -> Outcome {
    let mut cfg = table2_config();
    cfg.train.learning_rate = 0.1;
    let grid = GridSpec {
        batch_sizes: vec![16, 32, 64, 100, 128, 256],
        ..GridSpec::default()
    };
    let report = grid_search(&simulated(), &cfg, &grid, SEEDS, 0).unwrap();
    let mut interior = false;
    let mut lines = Vec::new();
    for curve in report.batch_curves() {
        let best = curve.argmax();
        let ends = (
            curve.points.first().map(|p| p.0),
            curve.points.last().map(|p| p.0),
        );
        interior |= best.is_some() && best != ends.0 && best != ends.1;
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|(b, v)| format!("{b}:{:.4}", v.unwrap_or(f64::NAN)))
            .collect();
        lines.push(format!(
            "{} argmax {:?} [{}]",
            curve.label(),
            best,
            pts.join(" ")
        ));
    }
    Outcome::new(
        interior,
        format!(
            "interior optimum in some arm: {interior}; {}",
            lines.join("; ")
        ),
    )
}

fn spatial_ablation() -> Outcome {
    let field = generate_spatial_field(DEFAULT_SIMULATED_ROWS, DATA_SEED, 2.0).unwrap();
    let cfg = table2_config();
    let mean_r2 = |ds: &Dataset| -> f64 {
        (0..SEEDS)
            .map(|s| {
                run_experiment(ds, &cfg, seed_for(0, s))
                    .map(|(_, o)| o.test.r2.unwrap_or(f64::NAN))
                    .unwrap_or(f64::NAN)
            })
            .sum::<f64>()
            / SEEDS as f64
    };
    let with = mean_r2(&field.spatial);
    let without = mean_r2(&field.plain);
    Outcome::new(
        with - without >= 0.02,
        format!("residual mean test R2 with spatial features {with:.4}, without {without:.4}, gain {:.4} (>= 0.02)", with - without),
    )
}

fn determinism_and_persistence() -> Outcome {
    let ds = generate_simulated(300, 4).unwrap();
    let mut cfg = table2_config();
    cfg.train.max_epochs = 20;
    let metrics_json = || {
        let (_, out) = run_experiment(&ds, &cfg, 9).unwrap();
        let json = serde_json::to_string(&(&out.validation, &out.test)).unwrap();
        (json, out)
    };
    let (a, out) = metrics_json();
    let (b, _) = metrics_json();
    let (data, _) = run_experiment(&ds, &cfg, 9).unwrap();
    let reloaded = TrainedModel::from_json(&out.model.to_json().unwrap()).unwrap();
    let p = reloaded.predict(&data.raw_test_x).unwrap();
    let bit_identical = p
        .data()
        .iter()
        .zip(out.test_predictions.data())
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && p.shape() == out.test_predictions.shape();
    Outcome::new(
        a == b && bit_identical,
        format!(
            "metrics JSON identical: {}, reloaded predictions bit-identical: {bit_identical}",
            a == b
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1 gradient correctness",
            gradient_correctness,
            Some(Duration::from_secs(60)),
        ),
        (
            "2 shortcut gradient identity",
            shortcut_gradient_identity,
            None,
        ),
        (
            "3 parameter-count invariance",
            parameter_count_invariance,
            None,
        ),
        (
            "4 simulated comparison",
            simulated_comparison,
            Some(Duration::from_secs(300)),
        ),
        (
            "5 airfoil self-noise",
            airfoil,
            Some(Duration::from_secs(600)),
        ),
        (
            "6 shortcut-count trend",
            residual_count_trend,
            Some(Duration::from_secs(600)),
        ),
        ("7 mini-batch curve", batch_curve_shape, None),
        (
            "8 spatial-feature ablation",
            spatial_ablation,
            Some(Duration::from_secs(300)),
        ),
        (
            "9 determinism and persistence",
            determinism_and_persistence,
            None,
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit
            .map(|l| format!(" of {}s", l.as_secs()))
            .unwrap_or_default();
        println!(
            "{} criterion {name}: {} [{:.1}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
