use alloc::vec::Vec;

use super::stats::student_t_two_sided_p;
use super::InfluenceSeries;
use crate::data::standardize_column;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternLabel {
    StableInfluencer,
    EarlyInfluencer,
    LateBloomer,
    HighlyFluctuating,
}

impl PatternLabel {
    pub const ALL: [PatternLabel; 4] = [
        PatternLabel::StableInfluencer,
        PatternLabel::EarlyInfluencer,
        PatternLabel::LateBloomer,
        PatternLabel::HighlyFluctuating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternLabel::StableInfluencer => "stable",
            PatternLabel::EarlyInfluencer => "early",
            PatternLabel::LateBloomer => "late",
            PatternLabel::HighlyFluctuating => "fluctuating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternConfig {
    pub p_threshold: f64,
    /// Per-sample standard deviation (standardized units) above which a
    /// trendless series counts as fluctuating.
    pub fluct_threshold: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            p_threshold: 0.05,
            fluct_threshold: 1.0,
        }
    }
}

/// Ordinary least squares of `ys` on `0, 1, ..`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub slope: f64,
    pub p_value: f64,
}

pub fn trend(ys: &[f64]) -> TrendFit {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxy == 0.0 || sxx == 0.0 {
        return TrendFit {
            slope: 0.0,
            p_value: 1.0,
        };
    }
    let slope = sxy / sxx;
    let sse = (syy - slope * sxy).max(0.0);
    let df = n - 2.0;
    // An exact line has no residual spread: the trend is certain.
    if sse <= 1e-12 * syy || df <= 0.0 {
        let p_value = if df <= 0.0 { 1.0 } else { 0.0 };
        return TrendFit { slope, p_value };
    }
    let se = libm::sqrt(sse / df / sxx);
    TrendFit {
        slope,
        p_value: student_t_two_sided_p(slope / se, df),
    }
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    libm::sqrt(xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternReport {
    /// `(sample id, label)` in series order.
    pub labels: Vec<(usize, PatternLabel)>,
    /// Epoch columns with zero spread across samples, set to zero.
    pub degenerate_epochs: Vec<usize>,
    /// Standardized series, rows in series order.
    pub standardized: Vec<Vec<f64>>,
}

impl PatternReport {
    /// Percentage of samples per label, in [`PatternLabel::ALL`] order.
    pub fn distribution(&self) -> [f64; 4] {
        let mut counts = [0usize; 4];
        for (_, l) in &self.labels {
            counts[PatternLabel::ALL
                .iter()
                .position(|x| x == l)
                .expect("label listed")] += 1;
        }
        let n = self.labels.len().max(1) as f64;
        counts.map(|c| 100.0 * c as f64 / n)
    }

    /// Most frequent label; ties resolved in [`PatternLabel::ALL`] order.
    pub fn plurality(&self) -> PatternLabel {
        let d = self.distribution();
        let mut best = 0;
        for k in 1..4 {
            if d[k] > d[best] {
                best = k;
            }
        }
        PatternLabel::ALL[best]
    }

    /// Mean standardized series per label, `None` when a label is unused.
    pub fn centroids(&self) -> [Option<Vec<f64>>; 4] {
        let mut out: [Option<Vec<f64>>; 4] = Default::default();
        for (k, label) in PatternLabel::ALL.iter().enumerate() {
            let rows: Vec<&Vec<f64>> = self
                .labels
                .iter()
                .zip(&self.standardized)
                .filter(|((_, l), _)| l == label)
                .map(|(_, r)| r)
                .collect();
            if let Some(first) = rows.first() {
                let mut c = alloc::vec![0.0; first.len()];
                for r in &rows {
                    for (a, v) in c.iter_mut().zip(r.iter()) {
                        *a += v;
                    }
                }
                c.iter_mut().for_each(|a| *a /= rows.len() as f64);
                out[k] = Some(c);
            }
        }
        out
    }
}

/// Standardizes every epoch column across samples, fits a per-sample linear
/// trend over epochs and labels each sample: early (significant negative
/// slope), late (significant positive slope), fluctuating (no trend, spread
/// above the threshold) or stable.
pub fn classify_patterns(series: &InfluenceSeries, config: PatternConfig) -> Result<PatternReport> {
    let epochs = series.num_epochs();
    if epochs < 3 {
        return Err(Error::InvalidConfig(alloc::format!(
            "pattern analysis needs >= 3 epochs, got {epochs}"
        )));
    }
    if series.num_samples() < 2 {
        return Err(Error::InvalidConfig("pattern analysis needs >= 2 samples".into()));
    }
    let mut standardized: Vec<Vec<f64>> = series.rows().to_vec();
    let mut degenerate_epochs = Vec::new();
    for e in 0..epochs {
        let mut col = series.column(e);
        if !standardize_column(&mut col) {
            degenerate_epochs.push(e);
        }
        for (row, v) in standardized.iter_mut().zip(col) {
            row[e] = v;
        }
    }
    let labels = series
        .sample_ids()
        .iter()
        .zip(&standardized)
        .map(|(&id, row)| {
            let fit = trend(row);
            let label = if fit.slope < 0.0 && fit.p_value < config.p_threshold {
                PatternLabel::EarlyInfluencer
            } else if fit.slope > 0.0 && fit.p_value < config.p_threshold {
                PatternLabel::LateBloomer
            } else if sample_std(row) > config.fluct_threshold {
                PatternLabel::HighlyFluctuating
            } else {
                PatternLabel::StableInfluencer
            };
            (id, label)
        })
        .collect();
    Ok(PatternReport {
        labels,
        degenerate_epochs,
        standardized,
    })
}
