use alloc::vec;
use alloc::vec::Vec;

use crate::data::FlipRecord;
use crate::dit::InfluenceRecord;
use crate::{Error, Result};

/// Sample indices ordered from most negative to most positive value, ties
/// by smaller index.
pub fn rank_most_negative(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Number of flipped samples among the `k = |flips|` most negative values,
/// where `values[j]` belongs to sample `j`.
pub fn detection_count(values: &[f64], flips: &FlipRecord) -> Result<usize> {
    if let Some(&bad) = flips.flipped_indices.iter().find(|&&j| j >= values.len()) {
        return Err(Error::MissingSample(bad));
    }
    let k = flips.len();
    Ok(rank_most_negative(values)
        .into_iter()
        .take(k)
        .filter(|&j| flips.contains(j))
        .count())
}

/// [`detection_count`] over records that must cover every sample exactly once,
/// in any order.
pub fn evaluate_detection(influences: &[InfluenceRecord], flips: &FlipRecord) -> Result<usize> {
    let n = influences.len();
    let mut values = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for r in influences {
        if r.j >= n || seen[r.j] {
            return Err(Error::InvalidConfig(alloc::format!(
                "duplicate or out-of-range sample {}",
                r.j
            )));
        }
        seen[r.j] = true;
        values[r.j] = r.value;
    }
    detection_count(&values, flips)
}
