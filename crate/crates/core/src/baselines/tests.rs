use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::data::{make_synthetic, make_synthetic_split, Dataset};
use crate::dit::TimeWindow;
use crate::numkit::{Batch, ModelSpec, Sample};
use crate::trainer::{sample_batches, train_with_batches, TrainConfig};
use crate::Error;

fn three_point() -> Dataset {
    Dataset::new(
        "three",
        2,
        vec![
            Sample::new(vec![1.0, 0.5], 1.0),
            Sample::new(vec![-0.5, 1.0], 0.0),
            Sample::new(vec![0.25, -1.0], 1.0),
        ],
    )
    .unwrap()
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

fn lr_loss(w: &[f64; 3], z: &Sample) -> f64 {
    let s = sig(w[0] * z.x[0] + w[1] * z.x[1] + w[2]);
    -(z.y * libm::log(s) + (1.0 - z.y) * libm::log(1.0 - s))
}

// Straight-line replay of three logistic SGD steps, optionally skipping `skip`.
fn hand_run(ds: &Dataset, batches: &[[usize; 2]], lr: f64, skip: Option<usize>) -> Vec<[f64; 3]> {
    let mut w = [0.0; 3];
    let mut out = vec![w];
    for b in batches {
        let mut g = [0.0; 3];
        for &i in b {
            if Some(i) == skip {
                continue;
            }
            let z = &ds.samples()[i];
            let r = sig(w[0] * z.x[0] + w[1] * z.x[1] + w[2]) - z.y;
            g[0] += r * z.x[0];
            g[1] += r * z.x[1];
            g[2] += r;
        }
        for k in 0..3 {
            w[k] -= lr / 2.0 * g[k];
        }
        out.push(w);
    }
    out
}

#[test]
fn loo_matches_hand_replay() {
    let ds = three_point();
    let model = ModelSpec::logistic(2);
    let rows = [[0, 1], [1, 2], [2, 0]];
    let batches: Vec<Batch> = rows.iter().map(|r| Batch::new(r.to_vec(), 3).unwrap()).collect();
    let cfg = TrainConfig::new(3, 2, 0.5, 0);
    let test = [
        Sample::new(vec![0.3, 0.1], 1.0),
        Sample::new(vec![-1.0, 0.2], 0.0),
    ];
    let mean = |w: &[f64; 3]| test.iter().map(|z| lr_loss(w, z)).sum::<f64>() / 2.0;
    let base = hand_run(&ds, &rows, 0.5, None);
    for j in 0..3 {
        let cf = hand_run(&ds, &rows, 0.5, Some(j));
        for (t1, t2) in [(0, 3), (1, 3), (1, 2)] {
            let expect = (mean(&cf[t2]) - mean(&cf[t1])) - (mean(&base[t2]) - mean(&base[t1]));
            let w = TimeWindow::new(t1, t2, 3).unwrap();
            let got = loo_influence(&ds, &model, &cfg, &batches, j, &test, w).unwrap();
            assert!(
                (got.delta_test_loss - expect).abs() <= 1e-14,
                "j {j}: {} vs {expect}",
                got.delta_test_loss
            );
        }
    }
}

#[test]
fn loo_of_unsampled_sample_is_zero() {
    let ds = make_synthetic(1, 5, 2, 2.0).unwrap();
    let model = ModelSpec::logistic(2);
    let batches: Vec<Batch> = [[0, 1], [2, 3], [1, 2]]
        .iter()
        .map(|r| Batch::new(r.to_vec(), 5).unwrap())
        .collect();
    let cfg = TrainConfig::new(3, 2, 0.5, 1);
    let test = [Sample::new(vec![0.1, 0.2], 1.0)];
    let r = loo_influence(
        &ds,
        &model,
        &cfg,
        &batches,
        4,
        &test,
        TimeWindow::full(3).unwrap(),
    )
    .unwrap();
    assert_eq!(r.delta_test_loss, 0.0);
    assert!(loo_influence(
        &ds,
        &model,
        &cfg,
        &batches,
        5,
        &test,
        TimeWindow::full(3).unwrap()
    )
    .is_err());
}

#[test]
fn epoch_series_rows_match_windowed_loo() {
    let ds = make_synthetic(2, 12, 3, 2.0).unwrap();
    let model = ModelSpec::logistic(3);
    let cfg = TrainConfig::new(12, 4, 0.5, 2);
    let batches = sample_batches(12, 12, 4, 2).unwrap();
    let test = [
        Sample::new(vec![0.5, -0.5, 0.1], 1.0),
        Sample::new(vec![-0.2, 0.4, 0.0], 0.0),
    ];
    let subset = [0, 5, 11];
    let one = loo_epoch_series(&ds, &model, &cfg, &batches, &subset, 1, &test).unwrap();
    assert_eq!(one.num_epochs(), 1);
    for (row, &j) in one.rows().iter().zip(&subset) {
        let w = TimeWindow::new(0, 3, 12).unwrap();
        let r = loo_influence(&ds, &model, &cfg, &batches, j, &test, w).unwrap();
        assert_eq!(row[0], r.delta_test_loss);
    }
    let four = loo_epoch_series(&ds, &model, &cfg, &batches, &subset, 4, &test).unwrap();
    assert_eq!(
        four,
        loo_epoch_series(&ds, &model, &cfg, &batches, &subset, 4, &test).unwrap()
    );
    // Epoch deltas telescope to the full-window delta.
    for (row, &j) in four.rows().iter().zip(&subset) {
        let full = loo_influence(
            &ds,
            &model,
            &cfg,
            &batches,
            j,
            &test,
            TimeWindow::full(12).unwrap(),
        )
        .unwrap();
        assert!((row.iter().sum::<f64>() - full.delta_test_loss).abs() <= 1e-12);
    }
}

#[test]
fn late_epoch_loo_shrinks_as_training_converges() {
    let (ds, test) = make_synthetic_split(3, 128, 64, 5, 2.0).unwrap();
    let model = ModelSpec::logistic(5);
    let cfg = TrainConfig::new(20 * 8, 16, 0.5, 3);
    let batches = sample_batches(128, cfg.steps, 16, 3).unwrap();
    let subset: Vec<usize> = (0..64).map(|k| 2 * k).collect();
    let series = loo_epoch_series(&ds, &model, &cfg, &batches, &subset, 20, test.samples()).unwrap();
    let col_norm = |e: usize| series.column(e).iter().map(|v| v * v).sum::<f64>();
    let early: f64 = (0..4).map(col_norm).sum();
    let late: f64 = (16..20).map(col_norm).sum();
    assert!(late < early, "late {late} vs early {early}");
}

#[test]
fn resampled_loo_never_uses_the_removed_sample() {
    let ds = make_synthetic(4, 10, 2, 2.0).unwrap();
    let model = ModelSpec::logistic(2);
    let cfg = TrainConfig::new(10, 3, 0.5, 4);
    let batches = sample_batches(10, 10, 3, 4).unwrap();
    let test = [Sample::new(vec![0.1, 0.2], 1.0)];
    let h = LooHarness::new(&ds, &model, &cfg, &batches, &test, LooMode::Resample).unwrap();
    let a = h.influence(3, TimeWindow::full(10).unwrap()).unwrap();
    assert!(a.delta_test_loss.is_finite());
    assert_eq!(a, h.influence(3, TimeWindow::full(10).unwrap()).unwrap());
    let replay = LooHarness::new(&ds, &model, &cfg, &batches, &test, LooMode::Replay).unwrap();
    assert_eq!(replay.base_loss(10), h.base_loss(10));
    assert_ne!(replay.influence(3, TimeWindow::full(10).unwrap()).unwrap(), a);
}

#[test]
fn zero_gradient_sample_has_zero_if_score() {
    // Least squares at theta = 0 has zero residual on a label-0 sample.
    let ds = Dataset::new(
        "ls",
        2,
        vec![
            Sample::new(vec![1.0, 0.0], 0.0),
            Sample::new(vec![0.0, 1.0], 1.0),
            Sample::new(vec![1.0, 1.0], 1.0),
        ],
    )
    .unwrap();
    let model = ModelSpec::least_squares(2);
    let r = if_influence(
        &ds,
        &model,
        &[0.0; 3],
        0,
        &[Sample::new(vec![0.5, 0.5], 1.0)],
        Some(0.1),
    )
    .unwrap();
    assert_eq!(r.score, 0.0);
    assert_eq!(r.damping, 0.1);
    assert!(if_influence(
        &ds,
        &model,
        &[0.0; 3],
        0,
        &[Sample::new(vec![0.5, 0.5], 1.0)],
        Some(0.0)
    )
    .is_err());
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[test]
fn quadratic_if_matches_closed_form() {
    let ds = make_synthetic(5, 15, 2, 1.5).unwrap();
    let model = ModelSpec::least_squares(2);
    let theta = [0.3, -0.2, 0.1];
    let test = [
        Sample::new(vec![0.4, 0.9], 1.0),
        Sample::new(vec![-0.6, 0.2], 0.0),
    ];
    // H = mean x~ x~^T, constant in theta.
    let mut h = [[0.0; 3]; 3];
    for z in ds.samples() {
        let xt = [z.x[0], z.x[1], 1.0];
        for a in 0..3 {
            for b in 0..3 {
                h[a][b] += xt[a] * xt[b] / 15.0;
            }
        }
    }
    let resid = |z: &Sample| theta[0] * z.x[0] + theta[1] * z.x[1] + theta[2] - z.y;
    let mut gt = [0.0; 3];
    for z in &test {
        let r = resid(z);
        gt[0] += r * z.x[0] / 2.0;
        gt[1] += r * z.x[1] / 2.0;
        gt[2] += r / 2.0;
    }
    // Cramer's rule for H x = gt.
    let d = det3(&h);
    let x: Vec<f64> = (0..3)
        .map(|c| {
            let mut m = h;
            for r in 0..3 {
                m[r][c] = gt[r];
            }
            det3(&m) / d
        })
        .collect();
    let est = IfEstimator::new(&ds, &model, &theta, &test, Some(1e-13)).unwrap();
    for j in 0..15 {
        let z = &ds.samples()[j];
        let r = resid(z);
        let expect = -(x[0] * r * z.x[0] + x[1] * r * z.x[1] + x[2] * r);
        let got = est.score(&ds, j).unwrap();
        assert!(
            (got.score - expect).abs() <= 1e-8 * expect.abs().max(1e-12),
            "j {j}"
        );
        assert_eq!(got.removal_estimate, -got.score / 15.0);
    }
}

#[test]
fn if_removal_estimate_agrees_with_retraining_on_converged_lr() {
    let (ds, test) = make_synthetic_split(6, 40, 20, 2, 1.0).unwrap();
    let model = ModelSpec::logistic(2);
    let cfg = TrainConfig::new(2000, 40, 1.0, 6);
    let batches = sample_batches(40, 2000, 40, 6).unwrap();
    let traj = train_with_batches(&ds, &model, &cfg, &batches).unwrap();
    let est = IfEstimator::new(&ds, &model, traj.final_params().unwrap(), test.samples(), None).unwrap();
    let h = LooHarness::new(&ds, &model, &cfg, &batches, test.samples(), LooMode::Replay).unwrap();
    let w = TimeWindow::full(2000).unwrap();
    let ifs: Vec<f64> = (0..40)
        .map(|j| est.score(&ds, j).unwrap().removal_estimate)
        .collect();
    let loo: Vec<f64> = (0..40)
        .map(|j| h.influence(j, w).unwrap().delta_test_loss)
        .collect();
    let mut net = 0i32;
    for a in 0..40 {
        for b in 0..a {
            net += ((ifs[a] - ifs[b]) * (loo[a] - loo[b])).signum() as i32;
        }
    }
    // 780 pairs; require a clearly positive rank agreement.
    assert!(net > 390, "net concordant pairs {net} of 780");
    let top = (0..40)
        .max_by(|&a, &b| loo[a].abs().total_cmp(&loo[b].abs()))
        .unwrap();
    assert_eq!(ifs[top] > 0.0, loo[top] > 0.0);
}

#[test]
fn dense_if_is_guarded() {
    let ds = make_synthetic(7, 4, 600, 1.0).unwrap();
    let model = ModelSpec::logistic(600);
    let r = IfEstimator::new(&ds, &model, &vec![0.0; 601], &ds.samples()[..1], None);
    assert!(matches!(r, Err(Error::DenseGuard { .. })));
}
