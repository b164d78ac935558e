use dit_core::analytics::{
    classify_patterns, detection_count, kendall_tau, segment_stages, stage_correlation_table, PatternConfig,
};
use dit_core::baselines::{loo_epoch_series, IfEstimator, LooHarness, LooMode};
use dit_core::data::{flip_labels, make_synthetic_split, train_test_split};
use dit_core::dit::{compute_influence_all, compute_influence_ckpt_all, QuerySpec, TimeWindow};
use dit_core::numkit::ModelSpec;
use dit_core::trainer::{
    epoch_loss_curve, sample_batches, train_with_batches, train_with_checkpoints, TrainConfig,
};

fn values(records: &[dit_core::dit::InfluenceRecord]) -> Vec<f64> {
    records.iter().map(|r| r.value).collect()
}

#[test]
fn logistic_run_agrees_with_leave_one_out() {
    let (n, d, steps) = (60, 4, 120);
    let (ds, test) = make_synthetic_split(3, n, 30, d, 2.0).unwrap();
    let model = ModelSpec::logistic(d);
    let cfg = TrainConfig::new(steps, 10, 0.3, 3);
    let batches = sample_batches(n, steps, 10, 3).unwrap();
    let traj = train_with_batches(&ds, &model, &cfg, &batches).unwrap();
    let q = QuerySpec::TestSetLoss(test.samples().to_vec());
    let full = TimeWindow::full(steps).unwrap();
    let dit = values(&compute_influence_all(&traj, &ds, &q, full).unwrap());

    let harness = LooHarness::new(&ds, &model, &cfg, &batches, test.samples(), LooMode::Replay).unwrap();
    let loo: Vec<f64> = (0..n)
        .map(|j| harness.influence(j, full).unwrap().delta_test_loss)
        .collect();
    assert!(kendall_tau(&dit, &loo).unwrap() > 0.8);

    let ife = IfEstimator::new(&ds, &model, traj.final_params().unwrap(), test.samples(), None).unwrap();
    let inf: Vec<f64> = ife
        .score_all(&ds)
        .unwrap()
        .iter()
        .map(|r| r.removal_estimate)
        .collect();
    assert!(kendall_tau(&inf, &loo).unwrap() > 0.0);
}

#[test]
fn checkpointed_run_reproduces_every_window() {
    let (n, d, steps) = (30, 3, 60);
    let (ds, test) = make_synthetic_split(8, n, 10, d, 2.0).unwrap();
    let model = ModelSpec::default_mlp(d);
    let mut cfg = TrainConfig::new(steps, 6, 0.2, 8);
    let batches = sample_batches(n, steps, 6, 8).unwrap();
    let traj = train_with_batches(&ds, &model, &cfg, &batches).unwrap();
    cfg.checkpoint_interval = Some(cfg.steps_per_epoch(n));
    let store = train_with_checkpoints(&ds, &model, &cfg, &batches).unwrap();
    let q = QuerySpec::TestSetLoss(test.samples().to_vec());
    for e in 0..steps / cfg.steps_per_epoch(n) {
        let w = TimeWindow::epoch(e, cfg.steps_per_epoch(n), steps).unwrap();
        assert_eq!(
            compute_influence_all(&traj, &ds, &q, w).unwrap(),
            compute_influence_ckpt_all(&store, &ds, &q, w).unwrap()
        );
    }
}

#[test]
fn flipped_labels_rank_among_most_harmful() {
    let (n, d, steps) = (100, 5, 300);
    let (clean, test) = make_synthetic_split(11, n, 50, d, 4.0).unwrap();
    let (ds, flips) = flip_labels(&clean, 0.1, 11).unwrap();
    let model = ModelSpec::logistic(d);
    let cfg = TrainConfig::new(steps, 10, 0.05, 11);
    let batches = sample_batches(n, steps, 10, 11).unwrap();
    let traj = train_with_batches(&ds, &model, &cfg, &batches).unwrap();
    let q = QuerySpec::TestSetLoss(test.samples().to_vec());
    let dit = values(&compute_influence_all(&traj, &ds, &q, TimeWindow::full(steps).unwrap()).unwrap());
    assert!(detection_count(&dit, &flips).unwrap() >= 7);
}

#[test]
fn dynamics_on_a_split_file_dataset() {
    let (pool, _) = make_synthetic_split(21, 150, 1, 4, 2.0).unwrap();
    let (ds, test) = train_test_split(&pool, 0.2, 21).unwrap();
    assert_eq!((ds.len(), test.len()), (120, 30));
    let n = ds.len();
    let model = ModelSpec::logistic(4);
    let cfg = TrainConfig::new(240, 12, 0.3, 21);
    let spe = cfg.steps_per_epoch(n);
    let batches = sample_batches(n, 240, 12, 21).unwrap();
    let traj = train_with_batches(&ds, &model, &cfg, &batches).unwrap();

    let curve = epoch_loss_curve(&traj, &ds, spe).unwrap();
    assert_eq!(curve.len(), 24);
    let split = segment_stages(&curve).unwrap().to_steps(spe, 240).unwrap();
    assert!(0 < split.b1 && split.b1 < split.b2 && split.b2 < 240);
    let q = QuerySpec::TestSetLoss(test.samples().to_vec());
    let table = stage_correlation_table(&traj, &ds, &q, split).unwrap();
    assert!(table.entries().iter().all(|(_, t)| (-1.0..=1.0).contains(t)));

    let tracked: Vec<usize> = (0..16).map(|k| k * n / 16).collect();
    let series = loo_epoch_series(&ds, &model, &cfg, &batches, &tracked, 24, test.samples()).unwrap();
    let report = classify_patterns(&series, PatternConfig::default()).unwrap();
    assert!((report.distribution().iter().sum::<f64>() - 100.0).abs() <= 1e-9);
}
