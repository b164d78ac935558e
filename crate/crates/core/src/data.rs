//! Datasets, synthetic generators and label corruption.
//!
//! A sample's identity is its position in [`Dataset::samples`]; nothing is
//! ever removed physically. Leave-one-out runs exclude a sample by skipping
//! it inside the batches.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numkit::Sample;
use crate::{Error, Result};

const SYNTH_STREAM: u64 = 3;
const FLIP_STREAM: u64 = 4;
const SUBSET_STREAM: u64 = 5;
const SPLIT_STREAM: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    samples: Vec<Sample>,
    feature_dim: usize,
}

impl Dataset {
    /// Validates that every sample has `feature_dim` finite features and a
    /// label in `{0, 1}`.
    pub fn new(name: impl Into<String>, feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            if s.x.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    what: "sample features",
                    expected: feature_dim,
                    got: s.x.len(),
                });
            }
            if !crate::linalg::all_finite(&s.x) {
                return Err(Error::InvalidConfig("non-finite feature value".into()));
            }
            if s.y != 0.0 && s.y != 1.0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "label {} is not binary",
                    s.y
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            samples,
            feature_dim,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, j: usize) -> Result<&Sample> {
        self.samples.get(j).ok_or(Error::IndexOutOfRange {
            what: "sample",
            index: j,
            len: self.samples.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Samples at the given positions, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| self.get(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.name.clone(), self.feature_dim, samples)
    }

    /// FNV-1a over the bit patterns of every feature and label.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.feature_dim as u64);
        for s in &self.samples {
            for v in &s.x {
                eat(v.to_bits());
            }
            eat(s.y.to_bits());
        }
        h
    }
}

/// Indices whose labels were toggled by [`flip_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRecord {
    /// Sorted ascending.
    pub flipped_indices: Vec<usize>,
    pub rate: f64,
}

impl FlipRecord {
    pub fn len(&self) -> usize {
        self.flipped_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flipped_indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.flipped_indices.binary_search(&j).is_ok()
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Two spherical unit-variance Gaussian clusters centred at
/// `+-(separation / 2) u` for a seeded unit direction `u`.
///
/// Labels alternate `0, 1, 0, ..` so every prefix is as balanced as
/// possible. Returns the first `n_train` draws as the training set and the
/// following `n_test` as a test set from the same distribution.
pub fn make_synthetic_split(
    seed: u64,
    n_train: usize,
    n_test: usize,
    d: usize,
    separation: f64,
) -> Result<(Dataset, Dataset)> {
    if n_train < 2 || d == 0 {
        return Err(Error::InvalidConfig(
            "synthetic data needs N >= 2 and d >= 1".into(),
        ));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidConfig("separation must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SYNTH_STREAM);
    let mut u: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
    let norm = crate::linalg::norm2(&u);
    u.iter_mut().for_each(|v| *v /= norm);

    let mut draw = |i: usize| {
        let y = (i % 2) as f64;
        let sign = if y == 1.0 { 0.5 } else { -0.5 };
        let x = u
            .iter()
            .map(|ui| sign * separation * ui + standard_normal(&mut rng))
            .collect();
        Sample::new(x, y)
    };
    let train: Vec<Sample> = (0..n_train).map(&mut draw).collect();
    let test: Vec<Sample> = (0..n_test).map(&mut draw).collect();
    Ok((
        Dataset::new("synthetic-train", d, train)?,
        Dataset::new("synthetic-test", d, test)?,
    ))
}

pub fn make_synthetic(seed: u64, n: usize, d: usize, separation: f64) -> Result<Dataset> {
    make_synthetic_split(seed, n, 0, d, separation).map(|(train, _)| train)
}

/// Uniform `k`-subset of `[0, n)` by a partial Fisher-Yates shuffle, sorted.
fn seeded_subset(n: usize, k: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let r = rng.random_range(i..n);
        order.swap(i, r);
    }
    order.truncate(k.min(n));
    order.sort_unstable();
    order
}

/// Seeded uniform choice of `k` distinct indices in `[0, n)`, sorted.
pub fn sample_subset(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::InvalidConfig(alloc::format!(
            "cannot pick {k} of {n} samples"
        )));
    }
    Ok(seeded_subset(n, k, seed, SUBSET_STREAM))
}

/// Splits off `round(test_fraction * N)` seeded samples as a test set. Both
/// parts keep the original sample order.
pub fn train_test_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test fraction must lie in (0, 1)".into()));
    }
    let n = dataset.len();
    let k = libm::round(test_fraction * n as f64) as usize;
    if k == 0 || k == n {
        return Err(Error::InvalidConfig(alloc::format!(
            "split of {n} samples leaves an empty side"
        )));
    }
    let test_idx = seeded_subset(n, k, seed, SPLIT_STREAM);
    let train_idx: Vec<usize> = (0..n).filter(|i| test_idx.binary_search(i).is_err()).collect();
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

/// Toggles `y -> 1 - y` for exactly `round(rate * N)` seeded positions.
pub fn flip_labels(dataset: &Dataset, rate: f64, seed: u64) -> Result<(Dataset, FlipRecord)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig("flip rate must lie in [0, 1)".into()));
    }
    let n = dataset.len();
    let k = libm::round(rate * n as f64) as usize;
    let flipped = seeded_subset(n, k, seed, FLIP_STREAM);
    let mut samples = dataset.samples.clone();
    for &j in &flipped {
        samples[j].y = 1.0 - samples[j].y;
    }
    let out = Dataset {
        name: dataset.name.clone(),
        samples,
        feature_dim: dataset.feature_dim,
    };
    Ok((
        out,
        FlipRecord {
            flipped_indices: flipped,
            rate,
        },
    ))
}

/// Z-scores a column in place using the sample standard deviation.
/// Returns `false` (and zeroes the column) when the column is constant.
pub fn standardize_column(values: &mut [f64]) -> bool {
    let n = values.len();
    if n < 2 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = libm::sqrt(var);
    if sd == 0.0 || !sd.is_finite() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(9, 50, 4, 2.0).unwrap();
        let b = make_synthetic(9, 50, 4, 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a, make_synthetic(10, 50, 4, 2.0).unwrap());
    }

    #[test]
    fn synthetic_two_samples_one_per_class() {
        let ds = make_synthetic(1, 2, 3, 1.0).unwrap();
        let labels: Vec<f64> = ds.samples().iter().map(|s| s.y).collect();
        assert_eq!(labels, [0.0, 1.0]);
        assert!(make_synthetic(1, 1, 3, 1.0).is_err());
        assert!(make_synthetic(1, 2, 0, 1.0).is_err());
    }

    #[test]
    fn synthetic_clusters_separate_along_direction() {
        let ds = make_synthetic(3, 2000, 5, 6.0).unwrap();
        let mut mean = [[0.0; 5]; 2];
        for s in ds.samples() {
            for (m, x) in mean[s.y as usize].iter_mut().zip(&s.x) {
                *m += x / 1000.0;
            }
        }
        let gap: f64 = (0..5).map(|i| (mean[1][i] - mean[0][i]).powi(2)).sum::<f64>();
        assert!((libm::sqrt(gap) - 6.0).abs() < 0.3);
    }

    #[test]
    fn flip_zero_rate_is_identity() {
        let ds = make_synthetic(2, 20, 2, 1.0).unwrap();
        let (out, rec) = flip_labels(&ds, 0.0, 5).unwrap();
        assert_eq!(out, ds);
        assert!(rec.is_empty());
    }

    #[test]
    fn flip_count_follows_rounding_rule() {
        let ds = make_synthetic(2, 250, 2, 1.0).unwrap();
        let (out, rec) = flip_labels(&ds, 0.10, 5).unwrap();
        assert_eq!(rec.len(), 25);
        let toggled = (0..250)
            .filter(|&i| out.samples()[i].y != ds.samples()[i].y)
            .count();
        assert_eq!(toggled, 25);
        for &j in &rec.flipped_indices {
            assert_eq!(out.samples()[j].y, 1.0 - ds.samples()[j].y);
        }
        let (_, again) = flip_labels(&ds, 0.10, 5).unwrap();
        assert_eq!(again, rec);
        assert!(flip_labels(&ds, 1.0, 5).is_err());
    }

    #[test]
    fn standardize_column_moments() {
        let mut v = [1.0, 2.0, 3.0];
        assert!(standardize_column(&mut v));
        assert_eq!(v, [-1.0, 0.0, 1.0]);
        let mut c = [4.0, 4.0, 4.0];
        assert!(!standardize_column(&mut c));
        assert_eq!(c, [0.0; 3]);
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        assert!(Dataset::new("x", 1, alloc::vec![Sample::new(alloc::vec![0.0], 0.5)]).is_err());
        assert!(Dataset::new("x", 2, alloc::vec![Sample::new(alloc::vec![0.0], 1.0)]).is_err());
    }

    #[test]
    fn split_partitions_samples() {
        let ds = make_synthetic(5, 20, 2, 1.0).unwrap();
        let (train, test) = train_test_split(&ds, 0.25, 9).unwrap();
        assert_eq!((train.len(), test.len()), (15, 5));
        let mut all: Vec<Sample> = train.samples().to_vec();
        all.extend(test.samples().iter().cloned());
        for z in ds.samples() {
            assert!(all.contains(z));
        }
        assert_eq!(train_test_split(&ds, 0.25, 9).unwrap(), (train, test));
        assert!(train_test_split(&ds, 0.0, 9).is_err());
        assert!(train_test_split(&ds, 0.01, 9).is_err());
    }

    #[test]
    fn subset_is_sorted_and_distinct() {
        let s = sample_subset(50, 10, 3).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, sample_subset(50, 10, 3).unwrap());
        assert_eq!(sample_subset(4, 4, 1).unwrap(), alloc::vec![0, 1, 2, 3]);
        assert!(sample_subset(3, 4, 1).is_err());
    }

    #[test]
    fn zero_separation_gives_chance_accuracy() {
        use crate::numkit::{predict, ModelSpec};
        use crate::trainer::{train, TrainConfig};
        let (train_set, test) = make_synthetic_split(8, 400, 400, 5, 0.0).unwrap();
        let traj = train(
            &train_set,
            &ModelSpec::logistic(5),
            &TrainConfig::new(400, 20, 0.5, 8),
        )
        .unwrap();
        let theta = traj.final_params().unwrap();
        let correct = test
            .samples()
            .iter()
            .filter(|z| (predict(&ModelSpec::logistic(5), theta, &z.x).unwrap() > 0.0) == (z.y == 1.0))
            .count();
        let acc = correct as f64 / 400.0;
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
    }
}
