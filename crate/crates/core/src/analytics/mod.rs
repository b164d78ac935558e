//! Ranking metrics, influence-pattern classification, training-stage
//! segmentation and label-flip detection scoring.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Samples x epochs influence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSeries {
    sample_ids: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl InfluenceSeries {
    pub fn new(sample_ids: Vec<usize>, values: Vec<Vec<f64>>) -> Result<Self> {
        if sample_ids.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "series rows",
                expected: sample_ids.len(),
                got: values.len(),
            });
        }
        let epochs = values.first().map_or(0, Vec::len);
        for row in &values {
            if row.len() != epochs {
                return Err(Error::DimensionMismatch {
                    what: "series row length",
                    expected: epochs,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: usize::MAX });
            }
        }
        Ok(Self { sample_ids, values })
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn num_samples(&self) -> usize {
        self.values.len()
    }

    pub fn num_epochs(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, e: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[e]).collect()
    }
}

mod detection;
mod metrics;
mod patterns;
mod stages;
pub mod stats;

pub use detection::{detection_count, evaluate_detection, rank_most_negative};
pub use metrics::{average_ranks, jaccard_top, kendall_tau, pearson, spearman, top_indices, TopOrder};
pub use patterns::{classify_patterns, trend, PatternConfig, PatternLabel, PatternReport, TrendFit};
pub use stages::{
    fit_exponential_decay, segment_stages, stage_correlation_table, Segmentation, StageSplit, StageTable,
};

#[cfg(test)]
mod tests;
