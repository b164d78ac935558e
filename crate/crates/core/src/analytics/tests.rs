use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::{regularized_incomplete_beta, student_t_two_sided_p};
use super::*;
use crate::data::{make_synthetic, FlipRecord};
use crate::dit::{InfluenceRecord, QuerySpec, TimeWindow};
use crate::numkit::{ModelSpec, Sample};
use crate::trainer::{train, TrainConfig};
use crate::Error;

fn random_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / libm::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))
}

// Pairwise tau-b.
fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c - d) as f64 / libm::sqrt(((c + d + tx) * (c + d + ty)) as f64)
}

#[test]
fn pearson_basic_cases() {
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(
        pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
        Err(Error::UndefinedCorrelation("zero variance"))
    );
    assert!(pearson(&[1.0], &[1.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn pearson_matches_textbook_formula() {
    for seed in 0..5 {
        let x = random_vec(seed, 100);
        let y: Vec<f64> = random_vec(seed + 100, 100)
            .iter()
            .zip(&x)
            .map(|(a, b)| a + 0.5 * b)
            .collect();
        assert!((pearson(&x, &y).unwrap() - textbook_pearson(&x, &y)).abs() <= 1e-12);
    }
}

#[test]
fn spearman_cases() {
    let x = random_vec(1, 50);
    let fx: Vec<f64> = x.iter().map(|v| libm::exp(*v) * 3.0).collect();
    assert!((spearman(&x, &fx).unwrap() - 1.0).abs() < 1e-15);
    let rx: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((spearman(&x, &rx).unwrap() + 1.0).abs() < 1e-15);
    // Hand ranks: x -> [1, 2.5, 2.5, 4], y -> [2, 1, 3.5, 3.5].
    let xs = [1.0, 2.0, 2.0, 5.0];
    let ys = [0.5, 0.1, 0.9, 0.9];
    assert_eq!(average_ranks(&xs), vec![1.0, 2.5, 2.5, 4.0]);
    assert_eq!(average_ranks(&ys), vec![2.0, 1.0, 3.5, 3.5]);
    let expect = textbook_pearson(&[1.0, 2.5, 2.5, 4.0], &[2.0, 1.0, 3.5, 3.5]);
    assert!((spearman(&xs, &ys).unwrap() - expect).abs() < 1e-15);
}

#[test]
fn kendall_cases() {
    assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert!((kendall_tau(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(kendall_tau(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    assert!(kendall_tau(&[1.0], &[2.0]).is_err());
    // Signed zeros tie.
    let t = kendall_tau(&[0.0, -0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((t - brute_tau_b(&[0.0, -0.0, 1.0], &[1.0, 2.0, 3.0])).abs() < 1e-15);
}

#[test]
fn kendall_matches_brute_force_with_ties() {
    for seed in 0..10 {
        let n = 200 + 30 * seed as usize;
        // Rounding creates many ties on both sides.
        let x: Vec<f64> = random_vec(seed, n).iter().map(|v| libm::round(v * 3.0)).collect();
        let y: Vec<f64> = random_vec(seed + 50, n)
            .iter()
            .zip(&x)
            .map(|(a, b)| libm::round(a * 2.0 + b))
            .collect();
        let fast = kendall_tau(&x, &y).unwrap();
        assert!((fast - brute_tau_b(&x, &y)).abs() <= 1e-12, "seed {seed}");
    }
}

#[test]
fn jaccard_cases() {
    let x = random_vec(3, 20);
    assert_eq!(jaccard_top(&x, &x, 0.3, TopOrder::Descending).unwrap(), 1.0);
    let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let rev: Vec<f64> = xs.iter().map(|v| -v).collect();
    assert_eq!(jaccard_top(&xs, &rev, 0.3, TopOrder::Descending).unwrap(), 0.0);
    // Top 3 of xs = {7, 8, 9}; of ys = {9, 8, 0} -> |A n B| = 2, |A u B| = 4.
    let ys = [5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 6.0, 7.0];
    assert_eq!(
        top_indices(&ys, 0.3, TopOrder::Descending).unwrap(),
        vec![0, 8, 9]
    );
    assert_eq!(jaccard_top(&xs, &ys, 0.3, TopOrder::Descending).unwrap(), 0.5);
    // Ties at the cutoff go to the smaller index.
    assert_eq!(
        top_indices(&[1.0, 2.0, 2.0, 2.0], 0.5, TopOrder::Descending).unwrap(),
        vec![1, 2]
    );
    assert_eq!(
        top_indices(&[-5.0, 2.0, 1.0], 0.34, TopOrder::AbsoluteDescending).unwrap(),
        vec![0, 1]
    );
    assert!(jaccard_top(&xs, &ys, 0.0, TopOrder::Descending).is_err());
    assert!(jaccard_top(&xs, &ys, 1.5, TopOrder::Descending).is_err());
}

#[test]
fn incomplete_beta_closed_forms() {
    for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
        assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() <= 1e-14);
        assert!((regularized_incomplete_beta(3.5, 1.0, x) - libm::pow(x, 3.5)).abs() <= 1e-13);
        assert!((regularized_incomplete_beta(1.0, 2.5, x) - (1.0 - libm::pow(1.0 - x, 2.5))).abs() <= 1e-13);
        let s = regularized_incomplete_beta(2.3, 4.1, x) + regularized_incomplete_beta(4.1, 2.3, 1.0 - x);
        assert!((s - 1.0).abs() <= 1e-13);
    }
}

#[test]
fn student_t_p_values() {
    // One degree of freedom is the Cauchy distribution, two has a closed form.
    for &t in &[0.1, 0.9, 2.5, 12.0] {
        let cauchy = 1.0 - 2.0 / core::f64::consts::PI * libm::atan(t);
        assert!((student_t_two_sided_p(t, 1.0) - cauchy).abs() <= 1e-13);
        let two = 1.0 - t / libm::sqrt(2.0 + t * t);
        assert!((student_t_two_sided_p(-t, 2.0) - two).abs() <= 1e-13);
    }
    // Tabulated 97.5% quantiles.
    assert!((student_t_two_sided_p(2.228_138_851_986_274, 10.0) - 0.05).abs() <= 1e-10);
    assert!((student_t_two_sided_p(2.063_898_561_628_021, 24.0) - 0.05).abs() <= 1e-10);
    assert_eq!(student_t_two_sided_p(0.0, 5.0), 1.0);
}

fn series(rows: Vec<Vec<f64>>) -> InfluenceSeries {
    InfluenceSeries::new((0..rows.len()).collect(), rows).unwrap()
}

#[test]
fn pattern_labels_follow_trend_and_spread() {
    // Sample 0 falls relative to the others, sample 1 rises, sample 2
    // alternates strongly, the rest stay put.
    let mut rows = vec![
        (0..10).map(|e| 5.0 - e as f64).collect::<Vec<_>>(),
        (0..10).map(|e| e as f64 - 5.0).collect(),
        (0..10).map(|e| if e % 2 == 0 { 4.0 } else { -4.0 }).collect(),
    ];
    for k in 0..7 {
        rows.push(vec![0.1 * k as f64 - 0.3; 10]);
    }
    let r = classify_patterns(&series(rows), PatternConfig::default()).unwrap();
    assert_eq!(r.labels[0].1, PatternLabel::EarlyInfluencer);
    assert_eq!(r.labels[1].1, PatternLabel::LateBloomer);
    assert_eq!(r.labels[2].1, PatternLabel::HighlyFluctuating);
    for (_, l) in &r.labels[3..] {
        assert_eq!(*l, PatternLabel::StableInfluencer);
    }
    assert_eq!(r.plurality(), PatternLabel::StableInfluencer);
    assert!((r.distribution().iter().sum::<f64>() - 100.0).abs() < 1e-12);
    assert!(r.degenerate_epochs.is_empty());
    assert!(r.centroids().iter().all(Option::is_some));
}

#[test]
fn constant_series_is_stable_and_degenerate() {
    let r = classify_patterns(&series(vec![vec![1.0; 5]; 4]), PatternConfig::default()).unwrap();
    assert!(r.labels.iter().all(|(_, l)| *l == PatternLabel::StableInfluencer));
    assert_eq!(r.degenerate_epochs, vec![0, 1, 2, 3, 4]);
    assert!(classify_patterns(&series(vec![vec![1.0, 2.0]; 4]), PatternConfig::default()).is_err());
}

#[test]
fn trend_of_exact_line() {
    let f = trend(&[3.0, 2.0, 1.0, 0.0]);
    assert_eq!(f.slope, -1.0);
    assert_eq!(f.p_value, 0.0);
    assert_eq!(trend(&[1.0, 1.0, 1.0]).p_value, 1.0);
}

fn exp_curve(e: usize) -> Vec<f64> {
    (0..e).map(|t| 2.0 * libm::exp(-0.3 * t as f64) + 0.5).collect()
}

#[test]
fn exponential_fit_recovers_parameters() {
    let (a, b, c) = fit_exponential_decay(&exp_curve(20));
    assert!((a - 2.0).abs() < 1e-6 && (b - 0.3).abs() < 1e-6 && (c - 0.5).abs() < 1e-6);
}

#[test]
fn pure_exponential_falls_back_to_thirds() {
    let s = segment_stages(&exp_curve(20)).unwrap();
    assert!(s.fallback);
    assert_eq!(s.epochs, (6, 13));
}

#[test]
fn injected_bumps_become_boundaries() {
    let mut y = exp_curve(20);
    y[5] += 0.3;
    y[13] += 0.25;
    let s = segment_stages(&y).unwrap();
    assert!(!s.fallback);
    assert_eq!(s.epochs, (5, 13));
    let split = s.to_steps(10, 200).unwrap();
    assert_eq!((split.b1, split.b2), (50, 130));
    assert_eq!(split.late(), TimeWindow { t1: 130, t2: 200 });
}

#[test]
fn rising_loss_falls_back() {
    let y: Vec<f64> = (0..9).map(|t| t as f64).collect();
    let s = segment_stages(&y).unwrap();
    assert!(s.fallback);
    assert_eq!(s.epochs, (3, 6));
    assert!(segment_stages(&y[..5]).is_err());
    assert!(StageSplit::new(0, 3, 9).is_err());
    assert!(StageSplit::new(3, 9, 9).is_err());
}

#[test]
fn stage_table_on_small_run() {
    let ds = make_synthetic(1, 30, 3, 2.0).unwrap();
    let traj = train(&ds, &ModelSpec::logistic(3), &TrainConfig::new(60, 6, 0.5, 1)).unwrap();
    let q = QuerySpec::TestLoss(Sample::new(vec![0.2, -0.1, 0.4], 1.0));
    let split = StageSplit::new(20, 40, 60).unwrap();
    let t = stage_correlation_table(&traj, &ds, &q, split).unwrap();
    for (_, v) in t.entries() {
        assert!((-1.0..=1.0).contains(&v));
    }
    assert!(stage_correlation_table(&traj, &ds, &q, StageSplit::new(20, 40, 61).unwrap()).is_err());

    let one = crate::data::Dataset::new("one", 1, vec![Sample::new(vec![1.0], 1.0)]).unwrap();
    let t1 = train(&one, &ModelSpec::logistic(1), &TrainConfig::new(6, 1, 0.5, 0)).unwrap();
    let q1 = QuerySpec::TestLoss(Sample::new(vec![1.0], 0.0));
    assert!(matches!(
        stage_correlation_table(&t1, &one, &q1, StageSplit::new(2, 4, 6).unwrap()),
        Err(Error::UndefinedCorrelation(_))
    ));
}

fn records(values: &[f64]) -> Vec<InfluenceRecord> {
    values
        .iter()
        .enumerate()
        .map(|(j, &value)| InfluenceRecord {
            j,
            window: TimeWindow { t1: 0, t2: 1 },
            query: "test_loss".into(),
            value,
        })
        .collect()
}

#[test]
fn detection_counts() {
    let flips = FlipRecord {
        flipped_indices: vec![1, 4, 6],
        rate: 0.3,
    };
    let v = [0.5, -3.0, 0.2, 0.1, -2.0, 0.3, -1.0, 0.0, 0.4, 0.6];
    assert_eq!(evaluate_detection(&records(&v), &flips).unwrap(), 3);
    // Equal values: the first k indices win, which catches only sample 1.
    assert_eq!(evaluate_detection(&records(&[0.0; 10]), &flips).unwrap(), 1);
    let mut shuffled = records(&v);
    shuffled.reverse();
    assert_eq!(evaluate_detection(&shuffled, &flips).unwrap(), 3);
    shuffled.pop();
    assert!(evaluate_detection(&shuffled, &flips).is_err());
    assert!(detection_count(&v[..5], &flips).is_err());
}

fn finite_pairs(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..max).prop_flat_map(|n| {
        (
            prop::collection::vec(-50i32..50, n)
                .prop_map(|v| v.into_iter().map(|x| x as f64 / 4.0).collect()),
            prop::collection::vec(-50i32..50, n)
                .prop_map(|v| v.into_iter().map(|x| x as f64 / 4.0).collect()),
        )
    })
}

proptest! {
    #[test]
    fn kendall_equals_brute_force((x, y) in finite_pairs(500)) {
        if let Ok(t) = kendall_tau(&x, &y) {
            prop_assert!((t - brute_tau_b(&x, &y)).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn metrics_are_symmetric((x, y) in finite_pairs(60)) {
        for f in [pearson, spearman, kendall_tau] {
            match (f(&x, &y), f(&y, &x)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn rank_metrics_ignore_increasing_transforms((x, y) in finite_pairs(60), s in 0.1f64..5.0, c in -3.0f64..3.0) {
        let fx: Vec<f64> = x.iter().map(|v| libm::exp(v / 4.0) * s + c).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v + c).collect();
        if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&fx, &gy)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        if let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&fx, &gy)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let a = jaccard_top(&x, &y, 0.3, TopOrder::Descending).unwrap();
        let b = jaccard_top(&fx, &gy, 0.3, TopOrder::Descending).unwrap();
        prop_assert_eq!(a, b);
        let ax: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        if let (Ok(p), Ok(q)) = (pearson(&x, &y), pearson(&ax, &y)) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn classification_is_total(rows in prop::collection::vec(prop::collection::vec(-20i32..20, 6), 2..30)) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let n = rows.len();
        let r = classify_patterns(&series(rows), PatternConfig::default()).unwrap();
        prop_assert_eq!(r.labels.len(), n);
        prop_assert!((r.distribution().iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn detection_ignores_record_order(v in prop::collection::vec(-5i32..5, 10), seed in 0u64..1000) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let flips = FlipRecord { flipped_indices: vec![0, 3, 7], rate: 0.3 };
        let base = evaluate_detection(&records(&v), &flips).unwrap();
        let mut recs = records(&v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..recs.len()).rev() {
            let k = rng.random_range(0..=i);
            recs.swap(i, k);
        }
        prop_assert_eq!(evaluate_detection(&recs, &flips).unwrap(), base);
    }
}
