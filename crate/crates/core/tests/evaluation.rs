use rdrn::data::{generate_simulated, Dataset, Task};
use rdrn::evaluation::{
    compare, grid_search, residual_sensitivity, resolve_loss, run_experiment, ArmStatus, GridSpec,
    RunConfig, TrainedModel,
};
use rdrn::layers::ResidualOption;
use rdrn::network::{NetworkSpec, OutputOption, ResidualMode};
use rdrn::training::LossKind;

fn quick(nnode: Vec<usize>) -> RunConfig {
    let mut cfg = RunConfig::new(NetworkSpec::new(8, nnode, 1));
    cfg.train.max_epochs = 5;
    cfg
}

fn sim() -> Dataset {
    generate_simulated(200, 11).unwrap()
}

#[test]
fn compare_pairs_arms_on_shared_splits() {
    let ds = sim();
    let report = compare(&ds, &quick(vec![16, 8, 4]), 3, 40).unwrap();
    assert_eq!(report.seeds, vec![40, 41, 42]);
    assert_eq!(report.runs.len(), 6);
    for pair in report.runs.chunks(2) {
        let (res, reg) = (&pair[0], &pair[1]);
        assert_eq!(
            (res.arm.as_str(), reg.arm.as_str()),
            ("residual", "regular")
        );
        assert_eq!(res.seed, reg.seed);
        assert_eq!(res.test_indices, reg.test_indices);
        assert_eq!(res.parameter_count, reg.parameter_count);
        assert_eq!(res.active_shortcuts, 3);
        assert_eq!(reg.active_shortcuts, 0);
        assert_eq!(res.test_predictions.as_ref().unwrap().len(), 40);
    }
    assert_eq!(report.residual.converged, 3);
    assert_eq!(report.regular.non_convergent, 0);
    let r2 = report.residual.test.r2.unwrap();
    assert!(r2.min <= r2.mean && r2.mean <= r2.max);
    assert!(report.nrmse_definition.contains("max"));

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
}

#[test]
fn compare_is_deterministic() {
    let ds = sim();
    let cfg = quick(vec![8, 4]);
    assert_eq!(
        compare(&ds, &cfg, 2, 5).unwrap(),
        compare(&ds, &cfg, 2, 5).unwrap()
    );
}

#[test]
fn divergent_arm_is_recorded_not_fatal() {
    let ds = sim();
    let mut cfg = quick(vec![8, 4]);
    cfg.train.learning_rate = 1e300;
    let report = compare(&ds, &cfg, 1, 0).unwrap();
    for run in &report.runs {
        assert!(matches!(run.status, ArmStatus::NonConvergent { .. }));
        assert!(run.test.is_none());
    }
    assert_eq!(report.residual.non_convergent, 1);
    assert!(report.residual.test.r2.is_none());
}

#[test]
fn singleton_grid_returns_its_cell() {
    let ds = sim();
    let grid = GridSpec {
        residual: vec![ResidualMode::Full],
        ..GridSpec::default()
    };
    let report = grid_search(&ds, &quick(vec![8, 4]), &grid, 1, 0).unwrap();
    assert_eq!(report.cells.len(), 1);
    let best = report.best().unwrap();
    assert_eq!(best.batch_size, 32);
    assert_eq!(best.nnode, vec![8, 4]);
}

#[test]
fn grid_ranks_and_emits_batch_curves() {
    let ds = sim();
    let grid = GridSpec {
        batch_sizes: vec![64, 16, 32],
        node_lists: vec![vec![8, 4], vec![12, 6]],
        ..GridSpec::default()
    };
    let cfg = quick(vec![8, 4]);
    let report = grid_search(&ds, &cfg, &grid, 2, 3).unwrap();
    assert_eq!(report.cells.len(), 12);
    let scores: Vec<f64> = report
        .ranking
        .iter()
        .map(|&i| report.cells[i].score().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(report, grid_search(&ds, &cfg, &grid, 2, 3).unwrap());

    let curves = report.batch_curves();
    assert_eq!(curves.len(), 4);
    for c in &curves {
        let sizes: Vec<usize> = c.points.iter().map(|p| p.0).collect();
        assert_eq!(sizes, vec![16, 32, 64]);
        let mut csv = Vec::new();
        c.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("batch_size,mean_val_r2\n16,"));
    }
}

#[test]
fn grid_ties_prefer_smaller_batch() {
    let ds = sim();
    let mut cfg = quick(vec![8, 4]);
    cfg.train.learning_rate = 0.0;
    // Batch-norm running statistics would still move at lr 0.
    cfg.network.use_batchnorm = false;
    cfg.network.residual_option = ResidualOption::Activation;
    let grid = GridSpec {
        batch_sizes: vec![64, 32],
        residual: vec![ResidualMode::Off],
        ..GridSpec::default()
    };
    let report = grid_search(&ds, &cfg, &grid, 1, 0).unwrap();
    let (a, b) = (&report.cells[0], &report.cells[1]);
    assert_eq!(a.score(), b.score());
    assert_eq!(report.best().unwrap().batch_size, 32);
}

#[test]
fn sensitivity_rows_match_comparison_arms() {
    let ds = sim();
    let cfg = quick(vec![16, 8, 4]);
    let sens = residual_sensitivity(&ds, &cfg, 2, 9).unwrap();
    assert_eq!(sens.available_shortcuts, 3);
    let counts: Vec<usize> = sens.rows.iter().map(|r| r.shortcuts).collect();
    assert_eq!(counts, vec![0, 1, 2, 3]);

    let cmp = compare(&ds, &cfg, 2, 9).unwrap();
    let arm = |name: &str| -> Vec<_> {
        cmp.runs
            .iter()
            .filter(|r| r.arm == name)
            .map(|r| r.test.clone())
            .collect()
    };
    let row = |i: usize| -> Vec<_> { sens.rows[i].runs.iter().map(|r| r.test.clone()).collect() };
    assert_eq!(row(0), arm("regular"));
    assert_eq!(row(3), arm("residual"));

    let mut csv = Vec::new();
    sens.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);

    assert!(residual_sensitivity(&ds, &quick(vec![4]), 1, 0).is_err());
}

#[test]
fn trained_model_round_trip_is_bit_identical() {
    let ds = sim();
    let (data, outcome) = run_experiment(&ds, &quick(vec![16, 8, 4]), 2).unwrap();
    let back = TrainedModel::from_json(&outcome.model.to_json().unwrap()).unwrap();
    assert_eq!(
        back.predict(&data.raw_test_x).unwrap(),
        outcome.test_predictions
    );
    let direct = outcome
        .model
        .evaluate(&data.raw_test_x, &data.raw_test_y)
        .unwrap();
    assert_eq!(direct, outcome.test);
}

#[test]
fn loss_follows_task_and_head() {
    let reg = Task::Regression;
    let cls = Task::Classification { n_classes: 3 };
    assert_eq!(
        resolve_loss(None, reg, OutputOption::Opt1).unwrap(),
        LossKind::MseOpt1
    );
    assert_eq!(
        resolve_loss(None, reg, OutputOption::Opt2).unwrap(),
        LossKind::MsePlusReconstructionOpt2 { weight: 1.0 }
    );
    assert_eq!(
        resolve_loss(None, cls, OutputOption::Opt1).unwrap(),
        LossKind::CrossEntropy
    );
    assert!(resolve_loss(None, cls, OutputOption::Opt2).is_err());
    assert!(resolve_loss(Some(LossKind::CrossEntropy), reg, OutputOption::Opt1).is_err());
}
