use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            what: "metric input",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two values"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value"));
    }
    Ok(())
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut k = i + 1;
        while k < order.len() && xs[order[k]] == xs[order[i]] {
            k += 1;
        }
        // Positions i..k hold ranks i+1..=k.
        let avg = (i + 1 + k) as f64 / 2.0;
        for &o in &order[i..k] {
            ranks[o] = avg;
        }
        i = k;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Counts tied pairs in runs of equal adjacent values of a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions (strictly greater earlier).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len();
    // Adding 0.0 maps -0.0 to 0.0 so signed zeros tie under the sort order.
    let xs: Vec<f64> = xs.iter().map(|v| v + 0.0).collect();
    let ys: Vec<f64> = ys.iter().map(|v| v + 0.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sxy: Vec<(f64, f64)> = order.iter().map(|&i| (xs[i], ys[i])).collect();
    let n1 = tied_pairs(&sx);
    let n3 = tied_pairs(&sxy);
    let mut sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut sy, &mut buf);
    let n2 = tied_pairs(&sy);
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let (ax, ay) = (n0 - n1, n0 - n2);
    if ax == 0 || ay == 0 {
        return Err(Error::UndefinedCorrelation("all values tied"));
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 swaps
    let diff = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok((diff / libm::sqrt(ax as f64 * ay as f64)).clamp(-1.0, 1.0))
}

/// Which entries count as "top" for [`jaccard_top`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopOrder {
    /// Largest signed values.
    #[default]
    Descending,
    /// Largest absolute values.
    AbsoluteDescending,
}

/// Indices of the `ceil(fraction * n)` top entries; ties at the cutoff go to
/// the smaller index.
pub fn top_indices(xs: &[f64], fraction: f64, order: TopOrder) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let key = |i: usize| match order {
        TopOrder::Descending => xs[i],
        TopOrder::AbsoluteDescending => xs[i].abs(),
    };
    let k = libm::ceil(fraction * xs.len() as f64) as usize;
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    idx.truncate(k.min(xs.len()));
    idx.sort_unstable();
    Ok(idx)
}

/// Jaccard similarity `|A n B| / |A u B|` of the top sets of `xs` and `ys`.
pub fn jaccard_top(xs: &[f64], ys: &[f64], fraction: f64, order: TopOrder) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            what: "metric input",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let a = top_indices(xs, fraction, order)?;
    let b = top_indices(ys, fraction, order)?;
    let inter = a.iter().filter(|i| b.binary_search(i).is_ok()).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}
